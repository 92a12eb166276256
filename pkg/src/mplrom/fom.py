"""Full-order model: 1D viscous Burgers equation on a uniform grid.

The PDE u_t + u u_x = mu u_xx is discretized with second-order central
differences in space (homogeneous Dirichlet boundaries at both ends) and
backward Euler in time, solved per step with Newton's method.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MU_RANGE",
    "IC_POINTS",
    "SpatialGrid",
    "TimeGrid",
    "FomModel",
    "Trajectory",
    "NewtonNonConvergence",
    "InitialConditionError",
    "build_initial_condition",
    "initial_condition_coefficients",
    "assemble_operators",
    "build_fom_model",
    "rhs",
    "step_backward_euler",
    "solve",
    "save_trajectory",
    "load_trajectory",
]

# Viscosity range the study covers; values outside it warn but still run
# because the domain decomposition probes near the edges.
MU_RANGE = (0.01, 1.0)

# Data points defining the degree-7 least-squares initial profile.
IC_POINTS = (
    (0.0, 0.0),
    (0.2, 1.0),
    (0.4, 0.5),
    (0.6, 1.0),
    (0.8, 0.2),
    (0.9, 0.1),
    (0.95, 0.05),
    (1.0, 0.0),
)


class NewtonNonConvergence(RuntimeError):
    """Newton iteration failed to meet the residual tolerance.

    Usually signals a too-large time step or a state outside the basin of
    attraction of the backward-Euler root.
    """

    def __init__(self, residual, iterations, mu=None, time_index=None):
        self.residual = float(residual)
        self.iterations = int(iterations)
        self.mu = mu
        self.time_index = time_index
        where = "" if time_index is None else f" at time index {time_index}"
        at_mu = "" if mu is None else f" (mu={mu!r})"
        super().__init__(
            f"Newton did not converge{where}{at_mu}: residual {residual:.3e} "
            f"after {iterations} iterations"
        )


class InitialConditionError(RuntimeError):
    """The least-squares fit of the initial profile is not trustworthy."""


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform spatial mesh on [0, length] with Dirichlet ends removed."""

    length: float = 1.0
    n_points: int = 201

    def __post_init__(self):
        if self.n_points < 3:
            raise ValueError("spatial grid needs at least 3 points")
        if not self.length > 0:
            raise ValueError("spatial length must be positive")

    @property
    def dx(self) -> float:
        return self.length / (self.n_points - 1)

    @property
    def n_state(self) -> int:
        return self.n_points - 2

    def interior_nodes(self) -> np.ndarray:
        """Coordinates x_i = i*dx of the unknowns (boundaries excluded)."""
        return self.dx * np.arange(1, self.n_points - 1)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform temporal mesh covering [0, t_final], endpoints included."""

    t_final: float = 1.0
    n_points: int = 301

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("time grid needs at least 2 points")
        if not self.t_final > 0:
            raise ValueError("final time must be positive")

    @property
    def dt(self) -> float:
        return self.t_final / (self.n_points - 1)

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_final, self.n_points)


@dataclass(frozen=True)
class FomModel:
    """Assembled semi-discrete Burgers model u' = -u o (a_x u) + mu a_xx u."""

    grid: SpatialGrid
    time: TimeGrid
    a_x: np.ndarray
    a_xx: np.ndarray
    u0: np.ndarray
    newton_max_iter: int = 50
    newton_tol: float = 1e-10


@dataclass(frozen=True)
class Trajectory:
    """Full-order states over the time grid; column j is the state at t_j."""

    mu: float
    states: np.ndarray  # (n_state, n_t), column 0 is the initial state

    @property
    def n_t(self) -> int:
        return self.states.shape[1]


def initial_condition_coefficients() -> np.ndarray:
    """Degree-7 polynomial coefficients (highest power first) fitted to IC_POINTS."""
    x = np.array([p[0] for p in IC_POINTS])
    y = np.array([p[1] for p in IC_POINTS])
    with warnings.catch_warnings():
        warnings.simplefilter("error", np.exceptions.RankWarning)
        try:
            return np.polyfit(x, y, deg=7)
        except np.exceptions.RankWarning as exc:  # pragma: no cover - defensive
            raise InitialConditionError(
                "initial-condition fit is rank deficient"
            ) from exc


def build_initial_condition(grid: SpatialGrid) -> np.ndarray:
    """Evaluate the degree-7 least-squares initial profile at the interior nodes.

    With eight data points and eight coefficients the least-squares fit is an
    interpolant up to conditioning of the Vandermonde system.
    """
    coeffs = initial_condition_coefficients()
    u0 = np.polyval(coeffs, grid.interior_nodes())
    if not np.all(np.isfinite(u0)):  # pragma: no cover - defensive
        raise InitialConditionError("initial condition evaluated to non-finite values")
    return u0


def assemble_operators(grid: SpatialGrid) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference first and second derivative operators.

    Interior stencils are [-1, 0, +1]/(2 dx) and [+1, -2, +1]/dx^2; the first
    and last rows drop the out-of-range entries, which encodes the homogeneous
    Dirichlet boundary values.
    """
    n = grid.n_state
    dx = grid.dx
    off = np.ones(n - 1)
    a_x = (np.diag(off, 1) - np.diag(off, -1)) / (2.0 * dx)
    a_xx = (np.diag(off, 1) - 2.0 * np.eye(n) + np.diag(off, -1)) / dx**2
    return a_x, a_xx


def build_fom_model(
    grid: SpatialGrid | None = None,
    time: TimeGrid | None = None,
    newton_max_iter: int = 50,
    newton_tol: float = 1e-10,
) -> FomModel:
    """Assemble operators and initial state for the given meshes."""
    grid = grid if grid is not None else SpatialGrid()
    time = time if time is not None else TimeGrid()
    a_x, a_xx = assemble_operators(grid)
    u0 = build_initial_condition(grid)
    return FomModel(
        grid=grid,
        time=time,
        a_x=a_x,
        a_xx=a_xx,
        u0=u0,
        newton_max_iter=newton_max_iter,
        newton_tol=newton_tol,
    )


def rhs(model: FomModel, u: np.ndarray, mu: float) -> np.ndarray:
    """Semi-discrete right-hand side -u o (a_x u) + mu (a_xx u)."""
    return -u * (model.a_x @ u) + mu * (model.a_xx @ u)


def _newton_jacobian(model: FomModel, u: np.ndarray, mu: float, dt: float) -> np.ndarray:
    # d/du of u - u_prev - dt*rhs(u):  I - dt*(-diag(a_x u) - diag(u) a_x + mu a_xx)
    ax_u = model.a_x @ u
    jac = -dt * (mu * model.a_xx - u[:, None] * model.a_x)
    idx = np.arange(u.size)
    jac[idx, idx] += 1.0 + dt * ax_u
    return jac


def step_backward_euler(
    model: FomModel, u_prev: np.ndarray, mu: float, time_index: int | None = None
) -> np.ndarray:
    """One implicit Euler step solved with Newton's method.

    Returns u with || u - u_prev - dt*rhs(u, mu) ||_2 below the model's
    Newton tolerance; the previous state serves as the initial guess.
    """
    dt = model.time.dt
    u = u_prev.astype(float, copy=True)
    g = u - u_prev - dt * rhs(model, u, mu)
    res = np.linalg.norm(g)
    if res < model.newton_tol:
        return u
    for iteration in range(1, model.newton_max_iter + 1):
        jac = _newton_jacobian(model, u, mu, dt)
        u -= np.linalg.solve(jac, g)
        g = u - u_prev - dt * rhs(model, u, mu)
        res = np.linalg.norm(g)
        if res < model.newton_tol:
            return u
    raise NewtonNonConvergence(res, iteration, mu=mu, time_index=time_index)


def solve(model: FomModel, mu: float) -> Trajectory:
    """Integrate the full model over the time grid.

    mu outside MU_RANGE is allowed with a warning; non-convergence raises
    NewtonNonConvergence carrying the failing time index.
    """
    if not (MU_RANGE[0] <= mu <= MU_RANGE[1]):
        warnings.warn(
            f"viscosity mu={mu!r} is outside the studied range {MU_RANGE}",
            RuntimeWarning,
            stacklevel=2,
        )
    n_t = model.time.n_points
    states = np.empty((model.grid.n_state, n_t))
    states[:, 0] = model.u0
    u = model.u0
    for j in range(1, n_t):
        u = step_backward_euler(model, u, mu, time_index=j)
        states[:, j] = u
    return Trajectory(mu=float(mu), states=states)


def save_trajectory(path, traj: Trajectory, time: TimeGrid, metadata: dict | None = None):
    """Write a trajectory as CSV: first row the time grid, then one row per node."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in (metadata or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write(f"# mu={traj.mu!r}\n")
        rows = np.vstack([time.times(), traj.states])
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_trajectory(path) -> tuple[Trajectory, np.ndarray]:
    """Read a trajectory CSV written by save_trajectory; returns (traj, times)."""
    mu = None
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("mu="):
                    mu = float(body[3:])
                continue
            rows.append([float(tok) for tok in line.split(",")])
    if mu is None or len(rows) < 2:
        raise ValueError(f"{path} is not a trajectory file")
    data = np.asarray(rows)
    return Trajectory(mu=mu, states=data[1:]), data[0]
