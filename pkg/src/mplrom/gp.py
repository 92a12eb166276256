"""Gaussian-process regression with a squared-exponential kernel.

Hyperparameters (length scale, signal variance, noise variance) are fitted by
minimizing the negative log marginal likelihood with L-BFGS-B in log-parameter
space, restarted from log-uniform draws. Inputs and targets are standardized
internally; predictions are returned in original units.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

__all__ = [
    "GpHyperparams",
    "GpModel",
    "GpFitError",
    "kernel_value",
    "kernel_matrix",
    "nll",
    "fit",
    "predict",
    "save_model",
    "load_model",
]

# Jitter ladder tried on Cholesky failure; duplicated inputs occur in gridded
# datasets and need a little regularization beyond the noise term.
JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)

# Bounds for log-hyperparameters during optimization (length scale, signal
# variance, noise variance), generous around standardized data.
_LOG_BOUNDS = ((np.log(1e-3), np.log(1e3)),
               (np.log(1e-8), np.log(1e4)),
               (np.log(1e-12), np.log(1e2)))


class GpFitError(RuntimeError):
    """Every optimizer restart failed; carries best-effort diagnostics."""


@dataclass(frozen=True)
class GpHyperparams:
    length_scale: float
    signal_var: float
    noise_var: float

    def __post_init__(self):
        for name in ("length_scale", "signal_var", "noise_var"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    def log_array(self) -> np.ndarray:
        return np.log([self.length_scale, self.signal_var, self.noise_var])

    @staticmethod
    def from_log_array(theta) -> "GpHyperparams":
        h, s, n = np.exp(theta)
        return GpHyperparams(length_scale=h, signal_var=s, noise_var=n)


def _pair_distances(za: np.ndarray, zb: np.ndarray, distance: str) -> np.ndarray:
    if distance == "squared":
        return cdist(za, zb, metric="sqeuclidean")
    if distance == "euclidean":
        return cdist(za, zb, metric="euclidean")
    raise ValueError(f"unknown distance mode {distance!r}")


def kernel_value(
    z_i, z_j, hyper: GpHyperparams, same_index: bool = False, distance: str = "squared"
) -> float:
    """Covariance between two points; same_index adds the noise term (delta_ij)."""
    d = _pair_distances(np.atleast_2d(z_i), np.atleast_2d(z_j), distance)[0, 0]
    value = hyper.signal_var * np.exp(-d / (2.0 * hyper.length_scale**2))
    if same_index:
        value += hyper.noise_var
    return float(value)


def kernel_matrix(
    za: np.ndarray,
    zb: np.ndarray | None,
    hyper: GpHyperparams,
    distance: str = "squared",
) -> np.ndarray:
    """Kernel matrix; with zb=None the training matrix including the noise diagonal."""
    if zb is None:
        d = _pair_distances(za, za, distance)
        k = hyper.signal_var * np.exp(-d / (2.0 * hyper.length_scale**2))
        k[np.diag_indices_from(k)] += hyper.noise_var
        return k
    d = _pair_distances(za, zb, distance)
    return hyper.signal_var * np.exp(-d / (2.0 * hyper.length_scale**2))


def _chol_with_jitter(k: np.ndarray):
    for jitter in JITTERS:
        try:
            kj = k if jitter == 0.0 else k + jitter * np.eye(k.shape[0])
            return cho_factor(kj, lower=True), jitter
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError(
        "kernel matrix is not positive definite even after maximal jitter"
    )


def nll(
    hyper: GpHyperparams, z: np.ndarray, y: np.ndarray, distance: str = "squared"
) -> tuple[float, np.ndarray]:
    """Negative log marginal likelihood (zero prior mean) and its gradient.

    The gradient is with respect to the log-hyperparameters in the order
    (log length_scale, log signal_var, log noise_var).
    """
    n = y.size
    d = _pair_distances(z, z, distance)
    k_se = hyper.signal_var * np.exp(-d / (2.0 * hyper.length_scale**2))
    k = k_se + hyper.noise_var * np.eye(n)
    (c, lower), _ = _chol_with_jitter(k)
    alpha = cho_solve((c, lower), y)
    value = (
        float(np.sum(np.log(np.diag(c))))
        + 0.5 * float(y @ alpha)
        + 0.5 * n * np.log(2.0 * np.pi)
    )
    # dNLL/dtheta_j = 0.5 tr((K^-1 - alpha alpha^T) dK/dtheta_j)
    k_inv = cho_solve((c, lower), np.eye(n))
    w = k_inv - np.outer(alpha, alpha)
    dk_dlog_h = k_se * d / hyper.length_scale**2
    grad = np.array(
        [
            0.5 * np.sum(w * dk_dlog_h),
            0.5 * np.sum(w * k_se),
            0.5 * np.trace(w) * hyper.noise_var,
        ]
    )
    return value, grad


@dataclass
class GpModel:
    """Fitted GP: standardized training set plus cached Cholesky factor."""

    z_train: np.ndarray  # (n, r) standardized features
    y_train: np.ndarray  # (n,) standardized targets
    hyper: GpHyperparams
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float
    distance: str
    chol: np.ndarray | None = None
    chol_lower: bool = True
    alpha: np.ndarray | None = None

    def finalize(self):
        k = kernel_matrix(self.z_train, None, self.hyper, self.distance)
        (c, lower), _ = _chol_with_jitter(k)
        self.chol = c
        self.chol_lower = lower
        self.alpha = cho_solve((c, lower), self.y_train)
        return self


def _standardize_columns(x: np.ndarray):
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return (x - mean) / std, mean, std


def fit(
    z: np.ndarray,
    y: np.ndarray,
    init: GpHyperparams | None = None,
    restarts: int = 5,
    seed: int = 0,
    distance: str = "squared",
    optimize: bool = True,
    max_opt_iter: int = 100,
) -> GpModel:
    """Fit hyperparameters by multi-start NLL minimization and cache factors.

    The provided init is always the first start, so the fitted NLL never
    exceeds the NLL at init. With optimize=False the init is used as-is.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if z.shape[0] == 1 and np.asarray(y).size > 1:
        z = z.T
    y = np.asarray(y, dtype=float).ravel()
    if y.size < 2:
        raise ValueError("need at least 2 training points")
    if z.shape[0] != y.size:
        raise ValueError("feature rows and target length disagree")

    zs, x_mean, x_std = _standardize_columns(z)
    y_mean = float(y.mean())
    y_scale = float(y.std())
    y_scale = y_scale if y_scale > 0 else 1.0
    ys = (y - y_mean) / y_scale

    if init is None:
        init = GpHyperparams(length_scale=1.0, signal_var=1.0, noise_var=1e-4)

    if not optimize:
        model = GpModel(
            z_train=zs, y_train=ys, hyper=init, x_mean=x_mean, x_std=x_std,
            y_mean=y_mean, y_std=y_scale, distance=distance,
        )
        return model.finalize()

    rng = np.random.default_rng(seed)
    starts = [init.log_array()]
    for _ in range(max(0, restarts - 1)):
        starts.append(
            np.array(
                [
                    rng.uniform(np.log(0.05), np.log(5.0)),
                    rng.uniform(np.log(0.1), np.log(10.0)),
                    rng.uniform(np.log(1e-8), np.log(1e-2)),
                ]
            )
        )

    def objective(theta):
        try:
            hyper = GpHyperparams.from_log_array(theta)
            return nll(hyper, zs, ys, distance)
        except (np.linalg.LinAlgError, FloatingPointError):
            return np.inf, np.zeros(3)

    best_theta = None
    best_value = np.inf
    failures = []
    for theta0 in starts:
        result = minimize(
            objective,
            theta0,
            jac=True,
            method="L-BFGS-B",
            bounds=_LOG_BOUNDS,
            options={"maxiter": max_opt_iter},
        )
        if np.isfinite(result.fun):
            if result.fun < best_value:
                best_value = float(result.fun)
                best_theta = result.x
        else:
            failures.append(result.message)
    if best_theta is None:
        raise GpFitError(f"all {len(starts)} restarts failed: {failures}")

    model = GpModel(
        z_train=zs,
        y_train=ys,
        hyper=GpHyperparams.from_log_array(best_theta),
        x_mean=x_mean,
        x_std=x_std,
        y_mean=y_mean,
        y_std=y_scale,
        distance=distance,
    )
    return model.finalize()


def predict(model: GpModel, z_star: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at the query points, in original units.

    Variance is the diagonal of K** - K*^T K^-1 K* (test diagonal includes the
    noise term), clamped at zero.
    """
    z_star = np.atleast_2d(np.asarray(z_star, dtype=float))
    if z_star.shape[1] != model.z_train.shape[1]:
        raise ValueError("query feature dimension does not match the training set")
    zs = (z_star - model.x_mean) / model.x_std
    k_star = kernel_matrix(model.z_train, zs, model.hyper, model.distance)
    mean = k_star.T @ model.alpha
    v = solve_triangular(model.chol, k_star, lower=model.chol_lower)
    var = (model.hyper.signal_var + model.hyper.noise_var) - np.sum(v**2, axis=0)
    var = np.maximum(var, 0.0)
    return mean * model.y_std + model.y_mean, var * model.y_std**2


def to_payload(model: GpModel, metadata: dict | None = None) -> dict:
    """JSON-ready dict sufficient to reload and re-predict bit-identically."""
    return {
        "kind": "gp",
        "metadata": metadata or {},
        "distance": model.distance,
        "hyper": {
            "length_scale": model.hyper.length_scale,
            "signal_var": model.hyper.signal_var,
            "noise_var": model.hyper.noise_var,
        },
        "x_mean": model.x_mean.tolist(),
        "x_std": model.x_std.tolist(),
        "y_mean": model.y_mean,
        "y_std": model.y_std,
        "z_train": model.z_train.tolist(),
        "y_train": model.y_train.tolist(),
    }


def from_payload(payload: dict) -> GpModel:
    if payload.get("kind") != "gp":
        raise ValueError("payload does not hold a GP model")
    model = GpModel(
        z_train=np.asarray(payload["z_train"], dtype=float),
        y_train=np.asarray(payload["y_train"], dtype=float),
        hyper=GpHyperparams(**payload["hyper"]),
        x_mean=np.asarray(payload["x_mean"], dtype=float),
        x_std=np.asarray(payload["x_std"], dtype=float),
        y_mean=float(payload["y_mean"]),
        y_std=float(payload["y_std"]),
        distance=payload["distance"],
    )
    return model.finalize()


def save_model(path, model: GpModel, metadata: dict | None = None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_payload(model, metadata), fh)


def load_model(path) -> GpModel:
    with open(path, encoding="utf-8") as fh:
        return from_payload(json.load(fh))
