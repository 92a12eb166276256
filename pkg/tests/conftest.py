"""Shared fixtures: coarse models for unit tests, disk-cached corpora for acceptance."""

from __future__ import annotations

import os
from pathlib import Path

import pytest

from mplrom import ann, dataset, fom, surrogates

CACHE_DIR = Path(
    os.environ.get("MPLROM_TEST_CACHE", Path(__file__).parent / "_cache")
)

# Jobs for the heavy generation steps; 0 or unset auto-detects.
JOBS = int(os.environ.get("MPLROM_TEST_JOBS", "0")) or (os.cpu_count() or 1)


@pytest.fixture(scope="session")
def coarse_fom():
    """Small, fast discretization for unit tests; same physics, same contracts."""
    return fom.build_fom_model(
        grid=fom.SpatialGrid(n_points=61), time=fom.TimeGrid(n_points=61)
    )


@pytest.fixture(scope="session")
def paper_fom():
    """The study discretization: 201 space points, 301 time points."""
    return fom.build_fom_model()


@pytest.fixture(scope="session")
def cache_dir():
    CACHE_DIR.mkdir(parents=True, exist_ok=True)
    return CACHE_DIR


@pytest.fixture(scope="session")
def error_corpus_full(paper_fom, cache_dir):
    """The 12000-record error corpus, generated once and cached on disk."""
    path = cache_dir / "error_corpus_full.csv"
    if path.exists():
        records, _ = dataset.read_error_csv(path)
        if len(records) == 12000:
            return records
    grid = dataset.error_grid_full()
    records, info = dataset.generate_error_dataset(grid, paper_fom, jobs=JOBS)
    dataset.write_error_csv(
        path,
        records,
        metadata={
            "fom_solves": info.fom_solves_basis + info.fom_solves_truth,
            "truth_evaluations": info.truth_evaluations,
        },
    )
    return records


@pytest.fixture(scope="session")
def dimension_corpus_full(paper_fom, cache_dir):
    """The 759 x 12 dimension corpus plus per-mu_p singular spectra, cached."""
    rec_path = cache_dir / "dimension_corpus_full.csv"
    spec_path = cache_dir / "dimension_spectra_full.csv"
    if rec_path.exists() and spec_path.exists():
        records, _ = dataset.read_dimension_csv(rec_path)
        spectra = dataset.read_spectra_csv(spec_path)
        if len(records) == 759 * 12:
            return records, spectra
    mu_ps = dataset.dimension_grid_full()
    records, spectra, _ = dataset.generate_dimension_dataset(
        mu_ps, dataset.DEFAULT_K_VALUES, paper_fom, jobs=JOBS
    )
    dataset.write_dimension_csv(rec_path, records)
    dataset.write_spectra_csv(spec_path, spectra)
    return records, spectra


@pytest.fixture(scope="session")
def ann_error_model_full(error_corpus_full, cache_dir):
    """ANN error surrogate trained on the full corpus; feeds criteria 8 and 9."""
    path = cache_dir / "ann_error_model_full.json"
    if path.exists():
        _, model = surrogates.load_surrogate(path)
        return model
    settings = surrogates.TrainSettings(seed=7, ann_epochs=12000, ann_learning_rate=5e-3)
    model = surrogates.train_error_model("ann", error_corpus_full, settings)
    surrogates.save_surrogate(path, "mplrom-error", model)
    return model
