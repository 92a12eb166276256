"""POD bases and tensorial Galerkin reduced-order models of the Burgers solver.

The reduced dynamics for a basis U built at mu_p are

    d x / dt = mu * b_lin x + q(x),   q_i(x) = - sum_jk t_quad[i,j,k] x_j x_k,

with b_lin = U^T a_xx U and t_quad[i,j,k] = <u_i, u_j o (a_x u_k)>, so the
online cost is independent of the full state dimension.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .fom import FomModel, NewtonNonConvergence, TimeGrid, Trajectory

__all__ = [
    "PodBasis",
    "RomOperators",
    "RomTrajectory",
    "BasisRankError",
    "SvdDimension",
    "compute_pod_basis",
    "select_dimension_by_svd",
    "truncate_basis",
    "build_rom_operators",
    "truncate_operators",
    "reduced_rhs",
    "solve_rom",
    "rom_error",
    "residual_indicator",
    "save_basis",
    "load_basis",
]


class BasisRankError(ValueError):
    """A basis dimension beyond the numerical rank of the snapshots was requested."""


@dataclass(frozen=True)
class PodBasis:
    """Orthonormal POD basis from the SVD of one snapshot matrix."""

    mu_p: float
    u_matrix: np.ndarray  # (n_state, k_pod), orthonormal columns
    singular_values: np.ndarray  # full nonincreasing spectrum of the snapshots

    @property
    def k_pod(self) -> int:
        return self.u_matrix.shape[1]


@dataclass(frozen=True)
class RomOperators:
    """Precomputed Galerkin operators for one (mu_p, K) pair."""

    mu_p: float
    b_lin: np.ndarray  # (K, K) reduced diffusion operator
    t_quad: np.ndarray  # (K, K, K) reduced quadratic tensor
    x0_red: np.ndarray  # (K,) reduced initial state

    @property
    def k_pod(self) -> int:
        return self.b_lin.shape[0]


@dataclass(frozen=True)
class RomTrajectory:
    """Reduced coordinates over the time grid; column j is x(t_j)."""

    mu: float
    red_states: np.ndarray  # (K, n_t)

    @property
    def n_t(self) -> int:
        return self.red_states.shape[1]


def _numerical_rank(singular_values: np.ndarray, shape: tuple[int, int]) -> int:
    if singular_values.size == 0 or singular_values[0] == 0.0:
        return 0
    cutoff = singular_values[0] * max(shape) * np.finfo(float).eps
    return int(np.count_nonzero(singular_values > cutoff))


def compute_pod_basis(
    traj: Trajectory, k: int | None = None, gamma: float | None = None
) -> PodBasis:
    """First left singular vectors of the snapshot matrix.

    Exactly one of k (explicit dimension) or gamma (captured energy fraction)
    selects the dimension. With gamma, the smallest m with
    I(m) = sum_{i<=m} s_i^2 / sum_i s_i^2 >= gamma is chosen.
    """
    if (k is None) == (gamma is None):
        raise ValueError("provide exactly one of k or gamma")
    snapshots = traj.states
    if snapshots.ndim != 2 or snapshots.shape[1] < 1:
        raise ValueError("trajectory must hold at least one snapshot column")
    u, s, _ = np.linalg.svd(snapshots, full_matrices=False)
    if gamma is not None:
        if not 0.0 < gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        energy = np.cumsum(s**2) / np.sum(s**2)
        k = int(np.argmax(energy >= gamma)) + 1
    rank = _numerical_rank(s, snapshots.shape)
    if k < 1:
        raise ValueError("basis dimension must be at least 1")
    if k > rank:
        raise BasisRankError(
            f"requested dimension {k} exceeds the numerical rank {rank} "
            f"of the snapshot matrix"
        )
    return PodBasis(mu_p=traj.mu, u_matrix=u[:, :k].copy(), singular_values=s)


class SvdDimension(NamedTuple):
    k: int
    attained: bool  # False when even the full spectrum misses the threshold


def select_dimension_by_svd(singular_values: np.ndarray, eps_bar: float) -> SvdDimension:
    """Smallest K with sqrt(sum_{i>K} s_i^2) <= eps_bar.

    This is the Frobenius projection error of the snapshots; it ignores the
    in-plane error of integrating in the reduced space. The minimum returned
    dimension is 1. If the threshold is unreachable the full spectrum length
    is returned with attained=False.
    """
    if not eps_bar > 0:
        raise ValueError("eps_bar must be positive")
    s = np.asarray(singular_values, dtype=float)
    sq = s**2
    # tail[k] = sum of squares beyond the first k values, k = 0..n
    tail = np.concatenate([np.cumsum(sq[::-1])[::-1], [0.0]])
    for k in range(1, s.size):
        if np.sqrt(tail[k]) <= eps_bar:
            return SvdDimension(k, True)
    # no proper truncation meets the threshold; keeping every mode is not a
    # reduction, so flag it
    return SvdDimension(s.size, False)


def truncate_basis(basis: PodBasis, k: int) -> PodBasis:
    if k < 1 or k > basis.k_pod:
        raise ValueError(f"cannot truncate basis of dimension {basis.k_pod} to {k}")
    if k == basis.k_pod:
        return basis
    return PodBasis(
        mu_p=basis.mu_p,
        u_matrix=basis.u_matrix[:, :k].copy(),
        singular_values=basis.singular_values,
    )


def build_rom_operators(basis: PodBasis, fom: FomModel) -> RomOperators:
    """Project the linear term and precompute the quadratic tensor."""
    u = basis.u_matrix
    if u.shape[0] != fom.grid.n_state:
        raise ValueError("basis and full model dimensions disagree")
    b_lin = u.T @ fom.a_xx @ u
    ax_u = fom.a_x @ u
    t_quad = np.einsum("si,sj,sk->ijk", u, u, ax_u, optimize=True)
    x0_red = u.T @ fom.u0
    return RomOperators(mu_p=basis.mu_p, b_lin=b_lin, t_quad=t_quad, x0_red=x0_red)


def truncate_operators(ops: RomOperators, k: int) -> RomOperators:
    """Leading K x K (x K) blocks; valid because the tensor entries only
    involve the first K basis vectors."""
    if k < 1 or k > ops.k_pod:
        raise ValueError(f"cannot truncate operators of dimension {ops.k_pod} to {k}")
    if k == ops.k_pod:
        return ops
    return RomOperators(
        mu_p=ops.mu_p,
        b_lin=np.ascontiguousarray(ops.b_lin[:k, :k]),
        t_quad=np.ascontiguousarray(ops.t_quad[:k, :k, :k]),
        x0_red=np.ascontiguousarray(ops.x0_red[:k]),
    )


def reduced_rhs(ops: RomOperators, x: np.ndarray, mu: float) -> np.ndarray:
    """mu * b_lin x - T(x, x) with T the precomputed quadratic tensor."""
    return mu * (ops.b_lin @ x) - (ops.t_quad @ x) @ x


def solve_rom(
    ops: RomOperators,
    mu: float,
    time: TimeGrid,
    newton_max_iter: int = 50,
    newton_tol: float = 1e-10,
) -> RomTrajectory:
    """Backward Euler in reduced coordinates with the same Newton limits as the FOM."""
    dt = time.dt
    k = ops.k_pod
    b_lin = ops.b_lin
    t_quad = ops.t_quad
    t_quad_jt = np.ascontiguousarray(t_quad.transpose(0, 2, 1))
    eye = np.eye(k)
    states = np.empty((k, time.n_points))
    states[:, 0] = ops.x0_red
    x_prev = ops.x0_red
    for j in range(1, time.n_points):
        x = x_prev.copy()
        contracted = t_quad @ x
        g = x - x_prev - dt * (mu * (b_lin @ x) - contracted @ x)
        res = np.linalg.norm(g)
        if res >= newton_tol:
            converged = False
            for _ in range(newton_max_iter):
                quad_jac = contracted + t_quad_jt @ x
                jac = eye - dt * (mu * b_lin - quad_jac)
                x -= np.linalg.solve(jac, g)
                contracted = t_quad @ x
                g = x - x_prev - dt * (mu * (b_lin @ x) - contracted @ x)
                res = np.linalg.norm(g)
                if res < newton_tol:
                    converged = True
                    break
            if not converged:
                raise NewtonNonConvergence(res, newton_max_iter, mu=mu, time_index=j)
        states[:, j] = x
        x_prev = x
    return RomTrajectory(mu=float(mu), red_states=states)


def rom_error(fom_traj: Trajectory, basis: PodBasis, rom_traj: RomTrajectory) -> float:
    """Frobenius norm of the lifted-state mismatch over the whole time grid (absolute)."""
    if fom_traj.n_t != rom_traj.n_t:
        raise ValueError("trajectories cover different numbers of time points")
    diff = fom_traj.states - basis.u_matrix @ rom_traj.red_states
    return float(np.linalg.norm(diff))


def residual_indicator(
    fom: FomModel, basis: PodBasis, rom_traj: RomTrajectory, mu: float
) -> float:
    """Frobenius norm of the full-model backward-Euler residuals of the lifted states.

    r_j = ubar_j - ubar_{j-1} - dt * rhs(ubar_j, mu) for j = 2..n_t, with
    ubar = U x. Cheap error indicator used by the ROMES baseline.
    """
    ubar = basis.u_matrix @ rom_traj.red_states
    dt = fom.time.dt
    f = -ubar * (fom.a_x @ ubar) + mu * (fom.a_xx @ ubar)
    r = ubar[:, 1:] - ubar[:, :-1] - dt * f[:, 1:]
    return float(np.linalg.norm(r))


def save_basis(path_prefix, basis: PodBasis, metadata: dict | None = None):
    """Write <prefix>_singular_values.csv and <prefix>_modes.csv."""
    header = [f"# {k}={v}" for k, v in (metadata or {}).items()]
    header.append(f"# mu_p={basis.mu_p!r}")
    sv_path = f"{path_prefix}_singular_values.csv"
    with open(sv_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(header) + "\n")
        fh.write("\n".join(f"{v:.17g}" for v in basis.singular_values) + "\n")
    modes_path = f"{path_prefix}_modes.csv"
    with open(modes_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(header) + "\n")
        for row in basis.u_matrix:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    return sv_path, modes_path


def load_basis(path_prefix) -> PodBasis:
    mu_p = None

    def read_rows(path):
        nonlocal mu_p
        rows = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    body = line[1:].strip()
                    if body.startswith("mu_p="):
                        mu_p = float(body[5:])
                    continue
                rows.append([float(tok) for tok in line.split(",")])
        return np.asarray(rows)

    singular_values = read_rows(f"{path_prefix}_singular_values.csv").ravel()
    u_matrix = read_rows(f"{path_prefix}_modes.csv")
    if mu_p is None:
        raise ValueError("basis files are missing the mu_p metadata line")
    return PodBasis(mu_p=mu_p, u_matrix=u_matrix, singular_values=singular_values)
