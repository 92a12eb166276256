"""Greedy decomposition of the viscosity domain into accuracy-certified intervals.

An error predictor phi(mu, mu_p, K) -> predicted log error drives two layers:
feasible-interval construction around one center, and the greedy right-to-left
sweep that covers [a, b] with overlapping intervals, relaxing the threshold
(beta1) and shrinking the search radius (beta2) where no feasible neighbors
exist, and proposing the next center beta3 times the feasible left radius away.
The predictor is interchangeable: a trained surrogate or the direct
solve-and-measure oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fom, rom
from .fom import FomModel

__all__ = [
    "FeasibleInterval",
    "DecompositionConfig",
    "DomainDecomposition",
    "DecompositionError",
    "VerificationReport",
    "SurrogatePredictor",
    "DirectErrorOracle",
    "CachedPredictor",
    "find_feasible_interval",
    "decompose_domain",
    "verify_decomposition",
    "save_decomposition",
    "load_decomposition",
    "decomposition_plot_rows",
]

EDGE_TOL = 1e-12  # float tolerance when comparing probes against [a, b]


@dataclass(frozen=True)
class FeasibleInterval:
    mu_p: float
    d_l: float
    d_r: float
    eps_bar: float
    k_pod: int

    def __post_init__(self):
        if not self.d_l <= self.mu_p + EDGE_TOL or not self.mu_p <= self.d_r + EDGE_TOL:
            raise ValueError("interval must contain its center")


@dataclass(frozen=True)
class DecompositionConfig:
    a: float = 0.01
    b: float = 1.0
    eps0: float = 1e-2
    delta_r: float = 5e-3
    r0: float = 0.5
    k_pod: int = 9
    beta1: float = 1.2
    beta2: float = 0.9
    beta3: float = 1.4
    mu_p0: float = 0.87
    max_iterations: int | None = None  # scan attempts; default 10*(b-a)/delta_r

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("need a < b")
        if not self.beta1 > 1:
            raise ValueError("beta1 must exceed 1")
        if not 0 < self.beta2 < 1:
            raise ValueError("beta2 must lie in (0, 1)")
        if not self.beta3 > 1:
            raise ValueError("beta3 must exceed 1")
        if self.delta_r <= 0 or self.r0 <= 0 or self.eps0 <= 0:
            raise ValueError("delta_r, r0 and eps0 must be positive")
        if not self.a < self.mu_p0 <= self.b:
            raise ValueError("mu_p0 must lie in (a, b]")

    @property
    def iteration_cap(self) -> int:
        if self.max_iterations is not None:
            return self.max_iterations
        return int(10 * (self.b - self.a) / self.delta_r)


@dataclass
class DomainDecomposition:
    """Feasible intervals in construction order (right to left)."""

    intervals: list

    def coverage_bounds(self) -> tuple[float, float]:
        return (
            min(iv.d_l for iv in self.intervals),
            max(iv.d_r for iv in self.intervals),
        )


class DecompositionError(RuntimeError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial or []


@dataclass
class SurrogatePredictor:
    """Adapts a trained multivariate error model to the phi interface."""

    model: object  # surrogates.ErrorModel

    def __call__(self, mu, mu_p, k_pod) -> float:
        return float(self.model.predict_log_error(mu, mu_p, k_pod)[0])


class DirectErrorOracle:
    """Computes log error by actually solving the models; caches everything.

    Trajectories, bases and reduced solves are memoized, so outward scans
    around one center only pay one FOM solve per new probe.
    """

    def __init__(self, fom_model: FomModel, k_max: int = 15):
        self.fom = fom_model
        self.k_max = k_max
        self._trajs: dict = {}
        self._bases: dict = {}
        self._values: dict = {}
        self.fom_solve_count = 0

    def _trajectory(self, mu: float):
        key = round(float(mu), 12)
        if key not in self._trajs:
            self._trajs[key] = fom.solve(self.fom, mu)
            self.fom_solve_count += 1
        return self._trajs[key]

    def _basis_ops(self, mu_p: float, k: int):
        key = round(float(mu_p), 12)
        if key not in self._bases:
            traj = self._trajectory(mu_p)
            basis = rom.compute_pod_basis(traj, k=max(k, self.k_max))
            self._bases[key] = (basis, rom.build_rom_operators(basis, self.fom))
        basis, ops = self._bases[key]
        return rom.truncate_basis(basis, k), rom.truncate_operators(ops, k)

    def __call__(self, mu, mu_p, k_pod) -> float:
        key = (round(float(mu), 12), round(float(mu_p), 12), int(k_pod))
        if key not in self._values:
            basis, ops = self._basis_ops(mu_p, int(k_pod))
            rom_traj = rom.solve_rom(ops, mu, self.fom.time)
            truth = self._trajectory(mu)
            self._values[key] = math.log(rom.rom_error(truth, basis, rom_traj))
        return self._values[key]


@dataclass
class CachedPredictor:
    """Memoizes any phi per (mu, mu_p, K); Algorithm runs revisit points."""

    predict: object
    _cache: dict = field(default_factory=dict)

    def __call__(self, mu, mu_p, k_pod) -> float:
        key = (round(float(mu), 12), round(float(mu_p), 12), int(k_pod))
        if key not in self._cache:
            self._cache[key] = float(self.predict(mu, mu_p, k_pod))
        return self._cache[key]


def find_feasible_interval(
    predict,
    mu_p: float,
    k_pod: int,
    eps_bar: float,
    step: float = 0.001,
    bounds: tuple = (0.01, 1.0),
) -> FeasibleInterval:
    """Probe outward from mu_p in +-step increments until the predicted log
    error exceeds log(eps_bar); each edge is the last passing probe, clipped
    to the bounds. If even the first probes fail the interval degenerates to
    the center alone."""
    if not eps_bar > 0:
        raise ValueError("eps_bar must be positive")
    a, b = bounds
    if not a - EDGE_TOL <= mu_p <= b + EDGE_TOL:
        raise ValueError(f"mu_p={mu_p} outside bounds {bounds}")
    log_bar = math.log(eps_bar)
    phi = CachedPredictor(predict)

    d_r = mu_p
    i = 1
    while True:
        mu = mu_p + i * step
        if mu > b + EDGE_TOL or phi(mu, mu_p, k_pod) > log_bar:
            break
        d_r = mu
        i += 1
    d_l = mu_p
    i = 1
    while True:
        mu = mu_p - i * step
        if mu < a - EDGE_TOL or phi(mu, mu_p, k_pod) > log_bar:
            break
        d_l = mu
        i += 1
    return FeasibleInterval(
        mu_p=float(mu_p), d_l=max(d_l, a), d_r=min(d_r, b),
        eps_bar=float(eps_bar), k_pod=int(k_pod),
    )


def _scan(phi, mu_p, k_pod, log_bar, delta_r, n_probe, direction, a, b):
    """One edge scan: up to n_probe equally spaced probes away from the center.

    Returns (edge, n_pass, guard_exit). n_pass counts consecutive passing
    probes, so edge = mu_p + direction*n_pass*delta_r unless the domain guard
    fired, in which case the edge is clipped to the domain bound (the strip
    between the last probe and the bound is narrower than one probe step).
    """
    n_pass = 0
    for i in range(1, n_probe + 1):
        mu = mu_p + direction * i * delta_r
        if (direction > 0 and mu > b + EDGE_TOL) or (direction < 0 and mu < a - EDGE_TOL):
            return (b if direction > 0 else a), n_pass, True
        if phi(mu, mu_p, k_pod) > log_bar:
            return mu_p + direction * n_pass * delta_r, n_pass, False
        n_pass = i
    return mu_p + direction * n_pass * delta_r, n_pass, False


def decompose_domain(predict, cfg: DecompositionConfig) -> DomainDecomposition:
    """Greedy right-to-left cover of [a, b] with feasible intervals.

    Non-termination is guarded by an iteration cap; hitting it raises
    DecompositionError carrying the partial decomposition.
    """
    phi = CachedPredictor(predict)
    a, b = cfg.a, cfg.b
    eps = cfg.eps0
    r = cfg.r0
    mu_p = cfg.mu_p0
    intervals: list[FeasibleInterval] = []
    attempts = 0
    closing_sweep = False

    while True:
        # scan-attempt loop: overlap repair and threshold relaxation re-enter here
        while True:
            attempts += 1
            if attempts > cfg.iteration_cap:
                raise DecompositionError(
                    f"no convergence within {cfg.iteration_cap} scan attempts",
                    partial=intervals,
                )
            log_bar = math.log(eps)
            n_probe = math.floor(r / cfg.delta_r) + 1
            d_r, right_pass, right_guard = _scan(
                phi, mu_p, cfg.k_pod, log_bar, cfg.delta_r, n_probe, +1, a, b
            )
            if intervals and d_r < intervals[-1].d_l - EDGE_TOL:
                # new interval fails to reach the previous one: recenter midway
                mu_p = 0.5 * (mu_p + intervals[-1].d_l)
                continue
            d_l, left_pass, left_guard = _scan(
                phi, mu_p, cfg.k_pod, log_bar, cfg.delta_r, n_probe, -1, a, b
            )
            # Relax only on error-driven empty scans; a domain-guard exit on
            # the very first probe just means the center sits at the boundary.
            if (right_pass == 0 and not right_guard) or (left_pass == 0 and not left_guard):
                eps *= cfg.beta1
                r *= cfg.beta2
                continue
            break

        intervals.append(
            FeasibleInterval(mu_p=mu_p, d_l=d_l, d_r=d_r, eps_bar=eps, k_pod=cfg.k_pod)
        )
        if closing_sweep or d_l <= a + EDGE_TOL:
            # the cover reached the left edge of the domain; a zero-pass
            # guard exit would otherwise re-propose the same center forever
            break

        # propose the next center beta3 feasible-left-radii to the left
        mu_next = mu_p - cfg.beta3 * left_pass * cfg.delta_r
        r = cfg.r0
        # pull the proposal toward d_l until the previous left edge is
        # predicted feasible for the new basis (overlap constraint); this may
        # lift a proposal that overshot past the domain edge back inside
        halvings = 0
        while mu_next <= 0 or phi(d_l, mu_next, cfg.k_pod) > math.log(eps):
            # non-positive viscosity proposals count as infeasible outright
            mu_next = 0.5 * (mu_next + d_l)
            halvings += 1
            if halvings > 100:
                break
        if mu_next <= a + EDGE_TOL:
            # the sweep is done; if an uncovered strip remains at the left
            # boundary, build one last interval centered on the boundary
            if min(iv.d_l for iv in intervals) > a + EDGE_TOL:
                mu_p = a
                closing_sweep = True
                continue
            break
        mu_p = mu_next

    return DomainDecomposition(intervals=intervals)


@dataclass
class VerificationReport:
    covered: bool
    gaps: list
    thresholds_monotone: bool
    threshold_violations: list  # (interval index, mu, predicted log error)

    @property
    def ok(self) -> bool:
        return self.covered and self.thresholds_monotone and not self.threshold_violations


def verify_decomposition(
    decomp: DomainDecomposition,
    predict,
    domain: tuple = (0.01, 1.0),
    probe_step: float = 1e-3,
) -> VerificationReport:
    """Check coverage of the domain, per-interval threshold satisfaction on a
    fine probe grid, and that thresholds never decrease right to left."""
    if not decomp.intervals:
        raise ValueError("decomposition is empty")
    a, b = domain
    phi = CachedPredictor(predict)

    by_left = sorted(decomp.intervals, key=lambda iv: iv.d_l)
    gaps = []
    reach = a
    if by_left[0].d_l > a + EDGE_TOL:
        gaps.append((a, by_left[0].d_l))
    for iv in by_left:
        if iv.d_l > reach + EDGE_TOL:
            gaps.append((reach, iv.d_l))
        reach = max(reach, iv.d_r)
    if reach < b - EDGE_TOL:
        gaps.append((reach, b))
    covered = not gaps

    # construction order is right to left; thresholds may only grow
    eps_values = [iv.eps_bar for iv in decomp.intervals]
    thresholds_monotone = all(
        later >= earlier - EDGE_TOL
        for earlier, later in zip(eps_values, eps_values[1:])
    )

    violations = []
    for idx, iv in enumerate(decomp.intervals):
        log_bar = math.log(iv.eps_bar)
        n = max(int(round((iv.d_r - iv.d_l) / probe_step)), 1)
        for mu in np.linspace(iv.d_l, iv.d_r, n + 1):
            value = phi(float(mu), iv.mu_p, iv.k_pod)
            if value > log_bar + 1e-9:
                violations.append((idx, float(mu), value))
    return VerificationReport(
        covered=covered,
        gaps=gaps,
        thresholds_monotone=thresholds_monotone,
        threshold_violations=violations,
    )


def save_decomposition(path, decomp: DomainDecomposition, metadata: dict | None = None):
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in (metadata or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write("idx,mu_p,d_l,d_r,eps_bar\n")
        for idx, iv in enumerate(decomp.intervals):
            fh.write(
                f"{idx},{iv.mu_p:.17g},{iv.d_l:.17g},{iv.d_r:.17g},{iv.eps_bar:.17g}\n"
            )


def load_decomposition(path, k_pod: int = 9) -> DomainDecomposition:
    intervals = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("idx,"):
                continue
            _, mu_p, d_l, d_r, eps = line.split(",")
            intervals.append(
                FeasibleInterval(
                    mu_p=float(mu_p), d_l=float(d_l), d_r=float(d_r),
                    eps_bar=float(eps), k_pod=k_pod,
                )
            )
    return DomainDecomposition(intervals=intervals)


def decomposition_plot_rows(decomp: DomainDecomposition):
    """Step-plot data (mu, eps_bar): two rows per interval, left then right edge."""
    rows = []
    for iv in decomp.intervals:
        rows.append((iv.d_l, iv.eps_bar))
        rows.append((iv.d_r, iv.eps_bar))
    return rows
