"""Corpus generation, persistence, folding, and reproducibility."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mplrom import dataset, fom, rom


@pytest.fixture(scope="module")
def tiny_grid():
    return dataset.ErrorGrid(
        mu_p_values=(0.3, 0.8), mu_values=(0.2, 0.5, 0.9), k_values=(3, 5)
    )


@pytest.fixture(scope="module")
def tiny_corpus(coarse_fom, tiny_grid):
    return dataset.generate_error_dataset(tiny_grid, coarse_fom, jobs=1)


class TestErrorDataset:
    def test_record_count_and_solve_budget(self, tiny_corpus, tiny_grid):
        records, info = tiny_corpus
        assert len(records) == 2 * 3 * 2
        assert info.fom_solves_basis == len(tiny_grid.mu_p_values)
        assert info.fom_solves_truth == len(tiny_grid.mu_values)
        assert info.truth_evaluations == 2 * 3

    def test_records_in_grid_order(self, tiny_corpus, tiny_grid):
        records, _ = tiny_corpus
        expected = [
            (mu_p, mu, k)
            for mu_p in tiny_grid.mu_p_values
            for mu in tiny_grid.mu_values
            for k in tiny_grid.k_values
        ]
        assert [(r.mu_p, r.mu, r.k_pod) for r in records] == expected

    def test_single_cell_matches_standalone_computation(self, coarse_fom):
        grid = dataset.ErrorGrid(mu_p_values=(0.6,), mu_values=(0.4,), k_values=(4,))
        records, _ = dataset.generate_error_dataset(grid, coarse_fom)
        assert len(records) == 1
        traj_p = fom.solve(coarse_fom, 0.6)
        basis = rom.compute_pod_basis(traj_p, k=4)
        ops = rom.build_rom_operators(basis, coarse_fom)
        red = rom.solve_rom(ops, 0.4, coarse_fom.time)
        truth = fom.solve(coarse_fom, 0.4)
        assert records[0].log_err == pytest.approx(
            math.log(rom.rom_error(truth, basis, red)), abs=1e-12
        )
        assert records[0].log_residual == pytest.approx(
            math.log(rom.residual_indicator(coarse_fom, basis, red, 0.4)), abs=1e-12
        )

    def test_regeneration_bit_identical(self, coarse_fom, tiny_grid, tiny_corpus):
        records_a, _ = tiny_corpus
        records_b, _ = dataset.generate_error_dataset(tiny_grid, coarse_fom, jobs=1)
        assert records_a == records_b

    def test_parallel_generation_matches_serial(self, coarse_fom, tiny_grid, tiny_corpus):
        records_serial, _ = tiny_corpus
        records_parallel, _ = dataset.generate_error_dataset(
            tiny_grid, coarse_fom, jobs=2
        )
        assert records_serial == records_parallel

    def test_replay_matches_recorded_values(self, coarse_fom, tiny_corpus):
        records, _ = tiny_corpus
        r = records[3]
        log_err, log_rho = dataset.replay_error_record(coarse_fom, r.mu, r.mu_p, r.k_pod)
        assert log_err == pytest.approx(r.log_err, abs=1e-12)
        assert log_rho == pytest.approx(r.log_residual, abs=1e-12)

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            dataset.ErrorGrid(mu_p_values=(0.5,), mu_values=(0.5,), k_values=())

    def test_full_grid_shape(self):
        grid = dataset.error_grid_full()
        assert len(grid.mu_p_values) == 10
        assert len(grid.mu_values) == 100
        assert len(grid.k_values) == 12
        assert grid.mu_p_values[0] == pytest.approx(0.1)
        assert grid.mu_values[0] == pytest.approx(0.01)

    def test_ci_grid_shape(self):
        grid = dataset.error_grid_ci()
        count = len(grid.mu_p_values) * len(grid.mu_values) * len(grid.k_values)
        assert count == 750


class TestDimensionDataset:
    def test_full_grid_spacing(self):
        values = dataset.dimension_grid_full()
        assert values[0] == pytest.approx(0.01)
        assert values[-1] <= 0.9956 + 1e-12
        diffs = np.diff(values)
        assert np.max(np.abs(diffs - 0.0013)) < 1e-12

    def test_single_mu_p_block(self, coarse_fom):
        # the coarse grid's snapshot rank is ~13, so keep K below that here;
        # the full K range runs against the study discretization in acceptance
        k_values = tuple(range(3, 11))
        records, spectra, info = dataset.generate_dimension_dataset(
            (0.8,), k_values, coarse_fom
        )
        assert len(records) == len(k_values)
        assert info.fom_solves_basis == 1
        assert set(spectra) == {0.8}
        log_errs = [r.log_err for r in records]
        # errors expected to shrink with dimension on this trajectory; a
        # violation here means the run needs review
        assert all(b < a for a, b in zip(log_errs, log_errs[1:]))

    def test_truth_reuses_basis_trajectory(self, coarse_fom):
        records, _, _ = dataset.generate_dimension_dataset(
            (0.5,), (4,), coarse_fom
        )
        log_err, _ = dataset.replay_error_record(coarse_fom, 0.5, 0.5, 4)
        assert records[0].log_err == pytest.approx(log_err, abs=1e-12)

    def test_empty_k_list_rejected(self, coarse_fom):
        with pytest.raises(ValueError):
            dataset.generate_dimension_dataset((0.5,), (), coarse_fom)


class TestFoldsAndSplits:
    def test_ten_records_five_folds_of_two(self):
        folds = dataset.kfold(10, k=5, seed=0)
        assert [len(folds.fold_indices(f)) for f in range(5)] == [2] * 5

    def test_same_seed_same_assignment(self):
        a = dataset.kfold(23, k=4, seed=3)
        b = dataset.kfold(23, k=4, seed=3)
        assert np.array_equal(a.assignment, b.assignment)

    @settings(max_examples=20, deadline=None)
    @given(n=st.integers(2, 200), k=st.integers(1, 10), seed=st.integers(0, 99))
    def test_folds_partition_indices(self, n, k, seed):
        if k > n:
            k = n
        folds = dataset.kfold(n, k=k, seed=seed)
        all_idx = np.concatenate([folds.fold_indices(f) for f in range(k)])
        assert sorted(all_idx) == list(range(n))
        sizes = [len(folds.fold_indices(f)) for f in range(k)]
        assert max(sizes) - min(sizes) <= 1

    def test_split_fraction_and_determinism(self):
        records = list(range(100))
        train_a, test_a = dataset.split(records, train_frac=0.8, seed=7)
        train_b, test_b = dataset.split(records, train_frac=0.8, seed=7)
        assert len(train_a) == 80 and len(test_a) == 20
        assert train_a == train_b and test_a == test_b
        assert sorted(train_a + test_a) == records

    def test_too_many_folds_rejected(self):
        with pytest.raises(ValueError):
            dataset.kfold(3, k=5)


class TestCsvIO:
    def test_error_corpus_round_trip(self, tmp_path, tiny_corpus):
        records, _ = tiny_corpus
        path = tmp_path / "corpus.csv"
        dataset.write_error_csv(path, records, metadata={"seed": 0, "note": "tiny"})
        loaded, metadata = dataset.read_error_csv(path)
        assert loaded == records  # 17 significant digits round-trip doubles
        assert metadata["seed"] == "0"

    def test_dimension_corpus_round_trip(self, tmp_path, coarse_fom):
        records, spectra, _ = dataset.generate_dimension_dataset(
            (0.4, 0.9), (3, 5), coarse_fom
        )
        rec_path = tmp_path / "dim.csv"
        spec_path = tmp_path / "spec.csv"
        dataset.write_dimension_csv(rec_path, records)
        dataset.write_spectra_csv(spec_path, spectra)
        loaded, _ = dataset.read_dimension_csv(rec_path)
        assert loaded == records
        loaded_spectra = dataset.read_spectra_csv(spec_path)
        for mu_p, values in spectra.items():
            assert np.array_equal(loaded_spectra[mu_p], values)

    def test_header_mismatch_detected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("wrong,header\n1,2\n")
        with pytest.raises(ValueError):
            dataset.read_error_csv(path)

    def test_written_files_bit_identical(self, tmp_path, tiny_corpus):
        records, _ = tiny_corpus
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        dataset.write_error_csv(a, records, metadata={"seed": 1})
        dataset.write_error_csv(b, records, metadata={"seed": 1})
        assert a.read_bytes() == b.read_bytes()
