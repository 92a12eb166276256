"""Training-corpus generation, persistence, splitting, and folding.

The error corpus holds one record per (mu, mu_p, K) triple with the log of the
reduced-model error and the log residual-norm indicator; the dimension corpus
holds records at mu = mu_p only. Generation performs exactly one full-order
solve per basis parameter and one per truth parameter, reusing cached
trajectories for every (mu, mu_p, K) evaluation.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import fom, rom

__all__ = [
    "ErrorSampleRecord",
    "DimensionSampleRecord",
    "FoldAssignment",
    "ErrorGrid",
    "GenerationInfo",
    "error_grid_full",
    "error_grid_ci",
    "dimension_grid_full",
    "dimension_grid_ci",
    "generate_error_dataset",
    "generate_dimension_dataset",
    "replay_error_record",
    "kfold",
    "split",
    "write_error_csv",
    "read_error_csv",
    "write_dimension_csv",
    "read_dimension_csv",
    "write_spectra_csv",
    "read_spectra_csv",
]

DEFAULT_K_VALUES = tuple(range(4, 16))
CI_K_VALUES = tuple(range(4, 10))  # rank-safe on coarsened discretizations


@dataclass(frozen=True)
class ErrorSampleRecord:
    mu: float
    mu_p: float
    k_pod: int
    log_err: float
    log_residual: float


@dataclass(frozen=True)
class DimensionSampleRecord:
    mu_p: float
    k_pod: int
    log_err: float


@dataclass(frozen=True)
class ErrorGrid:
    mu_p_values: tuple
    mu_values: tuple
    k_values: tuple

    def __post_init__(self):
        if not (self.mu_p_values and self.mu_values and self.k_values):
            raise ValueError("grid lists must be nonempty")


@dataclass
class GenerationInfo:
    """Bookkeeping for corpus generation; counts actual solver work."""

    fom_solves_basis: int = 0
    fom_solves_truth: int = 0
    truth_evaluations: int = 0  # (mu, mu_p) pairs whose error needed a truth run
    n_records: int = 0
    settings: dict = field(default_factory=dict)


def error_grid_full() -> ErrorGrid:
    """10 basis parameters x 100 viscosities x 12 dimensions = 12000 records."""
    return ErrorGrid(
        mu_p_values=tuple(i / 10.0 for i in range(1, 11)),
        mu_values=tuple(i / 100.0 for i in range(1, 101)),
        k_values=DEFAULT_K_VALUES,
    )


def error_grid_ci() -> ErrorGrid:
    """Desk-scale preset: 5 x 25 x 6 = 750 records.

    Dimensions stay at or below 9 so the preset also runs on coarsened
    discretizations, whose snapshot ranks sit in the low teens.
    """
    return ErrorGrid(
        mu_p_values=tuple(np.linspace(0.2, 1.0, 5)),
        mu_values=tuple(np.linspace(0.04, 1.0, 25)),
        k_values=CI_K_VALUES,
    )


def dimension_grid_full() -> tuple:
    """mu_p = 0.01 + 0.0013*i while the value stays at or below 0.9956."""
    values = []
    i = 0
    while True:
        v = 0.01 + 0.0013 * i
        if v > 0.9956 + 1e-12:
            break
        values.append(v)
        i += 1
    return tuple(values)


def dimension_grid_ci() -> tuple:
    return tuple(0.01 + 0.0165 * i for i in range(60))


# Worker-side context for process pools; set once per worker via initializer.
_WORKER_CTX: dict = {}


def _init_worker(ctx):
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _solve_fom_worker(mu):
    model = _WORKER_CTX["fom"]
    return mu, fom.solve(model, mu).states


def _solve_mu_p_block(args):
    """All (mu, K) evaluations for one basis parameter."""
    i_p, mu_p = args
    model = _WORKER_CTX["fom"]
    grid: ErrorGrid = _WORKER_CTX["grid"]
    truth_states = _WORKER_CTX["truth_states"]
    k_max = max(grid.k_values)
    basis_traj = fom.Trajectory(mu=mu_p, states=_WORKER_CTX["basis_states"][mu_p])
    basis_full = rom.compute_pod_basis(basis_traj, k=k_max)
    ops_full = rom.build_rom_operators(basis_full, model)
    rows = {}
    for i_k, k in enumerate(grid.k_values):
        basis_k = rom.truncate_basis(basis_full, k)
        ops_k = rom.truncate_operators(ops_full, k)
        for i_mu, mu in enumerate(grid.mu_values):
            try:
                rom_traj = rom.solve_rom(ops_k, mu, model.time)
            except fom.NewtonNonConvergence as exc:
                raise fom.NewtonNonConvergence(
                    exc.residual, exc.iterations, mu=(mu, mu_p, k),
                    time_index=exc.time_index,
                ) from exc
            truth = fom.Trajectory(mu=mu, states=truth_states[mu])
            eps = rom.rom_error(truth, basis_k, rom_traj)
            rho = rom.residual_indicator(model, basis_k, rom_traj, mu)
            rows[(i_mu, i_k)] = (math.log(eps), math.log(rho))
    return i_p, rows


def _parallel_map(func, items, ctx, jobs):
    if jobs <= 1 or len(items) <= 1:
        _init_worker(ctx)
        return [func(item) for item in items]
    with ProcessPoolExecutor(
        max_workers=min(jobs, len(items)), initializer=_init_worker, initargs=(ctx,)
    ) as pool:
        return list(pool.map(func, items))


def generate_error_dataset(
    grid: ErrorGrid, fom_model: fom.FomModel, jobs: int = 1
) -> tuple[list[ErrorSampleRecord], GenerationInfo]:
    """Build the error corpus with |mu_p| + |mu| full-order solves.

    Basis trajectories and truth trajectories are cached separately; every
    reduced solve derives from a cached basis and is compared against a cached
    truth run. Records come back in (mu_p, mu, K) grid order regardless of
    worker completion order.
    """
    info = GenerationInfo(
        settings={
            "mu_p": list(grid.mu_p_values),
            "mu": list(grid.mu_values),
            "k": list(grid.k_values),
        }
    )
    ctx = {"fom": fom_model}
    basis_states = dict(
        _parallel_map(_solve_fom_worker, list(grid.mu_p_values), ctx, jobs)
    )
    info.fom_solves_basis = len(basis_states)
    truth_states = dict(
        _parallel_map(_solve_fom_worker, list(grid.mu_values), ctx, jobs)
    )
    info.fom_solves_truth = len(truth_states)

    ctx = {
        "fom": fom_model,
        "grid": grid,
        "basis_states": basis_states,
        "truth_states": truth_states,
    }
    blocks = dict(
        _parallel_map(_solve_mu_p_block, list(enumerate(grid.mu_p_values)), ctx, jobs)
    )
    info.truth_evaluations = len(grid.mu_p_values) * len(grid.mu_values)

    records = []
    for i_p, mu_p in enumerate(grid.mu_p_values):
        rows = blocks[i_p]
        for i_mu, mu in enumerate(grid.mu_values):
            for i_k, k in enumerate(grid.k_values):
                log_err, log_rho = rows[(i_mu, i_k)]
                records.append(
                    ErrorSampleRecord(
                        mu=float(mu), mu_p=float(mu_p), k_pod=int(k),
                        log_err=log_err, log_residual=log_rho,
                    )
                )
    info.n_records = len(records)
    return records, info


def _solve_dimension_block(args):
    i_p, mu_p = args
    model = _WORKER_CTX["fom"]
    k_values = _WORKER_CTX["k_values"]
    traj = fom.solve(model, mu_p)
    k_max = max(k_values)
    basis_full = rom.compute_pod_basis(traj, k=k_max)
    ops_full = rom.build_rom_operators(basis_full, model)
    errs = []
    for k in k_values:
        basis_k = rom.truncate_basis(basis_full, k)
        ops_k = rom.truncate_operators(ops_full, k)
        rom_traj = rom.solve_rom(ops_k, mu_p, model.time)
        errs.append(math.log(rom.rom_error(traj, basis_k, rom_traj)))
    return i_p, (errs, basis_full.singular_values)


def generate_dimension_dataset(
    mu_p_values, k_values, fom_model: fom.FomModel, jobs: int = 1
) -> tuple[list[DimensionSampleRecord], dict, GenerationInfo]:
    """Self-error records at mu = mu_p; also returns the spectrum per mu_p.

    The spectra feed the singular-value baseline for dimension selection.
    """
    mu_p_values = tuple(mu_p_values)
    k_values = tuple(k_values)
    if not mu_p_values or not k_values:
        raise ValueError("grid lists must be nonempty")
    ctx = {"fom": fom_model, "k_values": k_values}
    blocks = dict(
        _parallel_map(_solve_dimension_block, list(enumerate(mu_p_values)), ctx, jobs)
    )
    records = []
    spectra = {}
    for i_p, mu_p in enumerate(mu_p_values):
        errs, singular_values = blocks[i_p]
        spectra[float(mu_p)] = singular_values
        for k, log_err in zip(k_values, errs):
            records.append(
                DimensionSampleRecord(mu_p=float(mu_p), k_pod=int(k), log_err=log_err)
            )
    info = GenerationInfo(
        fom_solves_basis=len(mu_p_values),
        n_records=len(records),
        settings={"mu_p": list(mu_p_values), "k": list(k_values)},
    )
    return records, spectra, info


def replay_error_record(
    fom_model: fom.FomModel, mu: float, mu_p: float, k: int
) -> tuple[float, float]:
    """Recompute (log_err, log_residual) for one triple from scratch."""
    basis_traj = fom.solve(fom_model, mu_p)
    basis = rom.compute_pod_basis(basis_traj, k=k)
    ops = rom.build_rom_operators(basis, fom_model)
    rom_traj = rom.solve_rom(ops, mu, fom_model.time)
    truth = basis_traj if mu == mu_p else fom.solve(fom_model, mu)
    eps = rom.rom_error(truth, basis, rom_traj)
    rho = rom.residual_indicator(fom_model, basis, rom_traj, mu)
    return math.log(eps), math.log(rho)


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    assignment: np.ndarray  # record index -> fold id
    seed: int

    def fold_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)


def kfold(n_records: int, k: int = 5, seed: int = 0) -> FoldAssignment:
    """Seeded shuffle then partition into k folds whose sizes differ by at most 1."""
    if k < 1 or k > n_records:
        raise ValueError("fold count must be in [1, n_records]")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_records)
    assignment = np.empty(n_records, dtype=int)
    for fold, chunk in enumerate(np.array_split(perm, k)):
        assignment[chunk] = fold
    return FoldAssignment(k=k, assignment=assignment, seed=seed)


def split(records, train_frac: float = 0.8, seed: int = 0):
    """Seeded random split into (train, test) lists."""
    if not 0.0 < train_frac < 1.0:
        raise ValueError("train_frac must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(records))
    n_train = int(round(train_frac * len(records)))
    train = [records[i] for i in perm[:n_train]]
    test = [records[i] for i in perm[n_train:]]
    return train, test


def _write_csv(path, header, rows, metadata):
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in (metadata or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _read_csv(path, expected_header):
    metadata = {}
    rows = []
    header_seen = False
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    metadata[key.strip()] = value.strip()
                continue
            if not header_seen:
                if line != expected_header:
                    raise ValueError(
                        f"{path}: expected header {expected_header!r}, got {line!r}"
                    )
                header_seen = True
                continue
            rows.append(line.split(","))
    return rows, metadata


ERROR_HEADER = "mu,mu_p,k_pod,log_err,log_residual"
DIMENSION_HEADER = "mu_p,k_pod,log_err"


def write_error_csv(path, records, metadata: dict | None = None):
    rows = (
        (
            f"{r.mu:.17g}", f"{r.mu_p:.17g}", str(r.k_pod),
            f"{r.log_err:.17g}", f"{r.log_residual:.17g}",
        )
        for r in records
    )
    _write_csv(path, ERROR_HEADER, rows, metadata)


def read_error_csv(path):
    rows, metadata = _read_csv(path, ERROR_HEADER)
    records = [
        ErrorSampleRecord(
            mu=float(r[0]), mu_p=float(r[1]), k_pod=int(r[2]),
            log_err=float(r[3]), log_residual=float(r[4]),
        )
        for r in rows
    ]
    return records, metadata


def write_dimension_csv(path, records, metadata: dict | None = None):
    rows = (
        (f"{r.mu_p:.17g}", str(r.k_pod), f"{r.log_err:.17g}") for r in records
    )
    _write_csv(path, DIMENSION_HEADER, rows, metadata)


def read_dimension_csv(path):
    rows, metadata = _read_csv(path, DIMENSION_HEADER)
    records = [
        DimensionSampleRecord(mu_p=float(r[0]), k_pod=int(r[1]), log_err=float(r[2]))
        for r in rows
    ]
    return records, metadata


def write_spectra_csv(path, spectra: dict, metadata: dict | None = None):
    """One row per mu_p: the parameter followed by its singular values."""
    rows = (
        (f"{mu_p:.17g}",) + tuple(f"{v:.17g}" for v in values)
        for mu_p, values in spectra.items()
    )
    _write_csv(path, "mu_p,singular_values...", rows, metadata)


def read_spectra_csv(path) -> dict:
    rows, _ = _read_csv(path, "mu_p,singular_values...")
    return {
        float(row[0]): np.array([float(v) for v in row[1:]]) for row in rows
    }
