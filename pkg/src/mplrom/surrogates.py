"""Regression surrogates for reduced-model error and basis dimension.

The multivariate error model maps (mu, mu_p, K) to the log reduced-model
error; the dimension model maps (mu_p, log error threshold) to a basis
dimension. Two univariate baselines cover one (mu_p, K) subset each: a
residual-indicator model (log residual -> log error) and a viscosity-only
model (mu -> log error). All four ride on the same GP and MLP engines.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import ann, gp
from .dataset import kfold

__all__ = [
    "TrainSettings",
    "ErrorModel",
    "DimensionModel",
    "BaselineModel",
    "MetricsReport",
    "CrossvalResult",
    "train_error_model",
    "train_dimension_model",
    "train_romes_model",
    "train_mfc_model",
    "evaluate",
    "fold_metrics",
    "crossval",
    "subset_records",
    "save_surrogate",
    "load_surrogate",
]

MIN_RECORDS = 50
METHODS = ("gp", "ann")


@dataclass(frozen=True)
class TrainSettings:
    """Knobs shared by all surrogate trainings; None picks per-model defaults."""

    seed: int = 0
    gp_restarts: int = 5
    gp_max_train: int | None = 2000  # seeded subsample cap for large GP fits
    gp_distance: str = "squared"
    gp_max_opt_iter: int = 100
    ann_hidden_layers: int | None = None
    ann_hidden_width: int = 20
    ann_epochs: int = 8000
    ann_learning_rate: float = 5e-3
    ann_batch_size: int | None = None
    unscaled_targets: bool = False  # fit raw errors instead of log errors


def _feature_matrix(records, names) -> np.ndarray:
    return np.array([[float(getattr(r, n)) for n in names] for r in records])


def _targets(records, name, unscaled=False) -> np.ndarray:
    y = np.array([float(getattr(r, name)) for r in records])
    return np.exp(y) if unscaled else y


def _fit_backend(method, features, targets, settings, default_layers):
    if method == "gp":
        if settings.gp_max_train is not None and len(targets) > settings.gp_max_train:
            rng = np.random.default_rng(settings.seed)
            idx = rng.choice(len(targets), size=settings.gp_max_train, replace=False)
            features, targets = features[idx], targets[idx]
        return gp.fit(
            features,
            targets,
            restarts=settings.gp_restarts,
            seed=settings.seed,
            distance=settings.gp_distance,
            max_opt_iter=settings.gp_max_opt_iter,
        )
    if method == "ann":
        layers = settings.ann_hidden_layers or default_layers
        arch = ann.MlpArchitecture(
            input_dim=features.shape[1],
            hidden_layers=layers,
            hidden_width=settings.ann_hidden_width,
        )
        cfg = ann.TrainingConfig(
            seed=settings.seed,
            max_epochs=settings.ann_epochs,
            batch_size=settings.ann_batch_size,
            learning_rate=settings.ann_learning_rate,
        )
        return ann.train(arch, features, targets, cfg)
    raise ValueError(f"method must be one of {METHODS}, got {method!r}")


def _predict_backend(method, model, features):
    if method == "gp":
        mean, _ = gp.predict(model, features)
        return mean
    return ann.predict(model, features)


@dataclass
class ErrorModel:
    """phi(mu, mu_p, K) -> predicted log error (or raw error in unscaled mode)."""

    method: str
    model: object
    target_scale: str = "log"  # "log" or "linear"

    def predict_target(self, features) -> np.ndarray:
        return _predict_backend(self.method, self.model, np.atleast_2d(features))

    def predict_log_error(self, mu, mu_p, k_pod) -> np.ndarray:
        mu, mu_p, k_pod = np.broadcast_arrays(
            np.atleast_1d(mu), np.atleast_1d(mu_p), np.atleast_1d(k_pod)
        )
        features = np.column_stack([mu, mu_p, k_pod]).astype(float)
        out = self.predict_target(features)
        if self.target_scale == "linear":
            out = np.log(np.maximum(out, np.finfo(float).tiny))
        return out


@dataclass
class DimensionModel:
    """phi(mu_p, log eps_bar) -> basis dimension, rounded and clamped."""

    method: str
    model: object
    clamp: tuple = (1, 199)

    def predict_dimension(self, mu_p, log_eps) -> np.ndarray:
        mu_p, log_eps = np.broadcast_arrays(
            np.atleast_1d(mu_p), np.atleast_1d(log_eps)
        )
        features = np.column_stack([mu_p, log_eps]).astype(float)
        raw = _predict_backend(self.method, self.model, features)
        k = np.rint(raw).astype(int)
        return np.clip(k, self.clamp[0], self.clamp[1])


@dataclass
class BaselineModel:
    """Univariate error model for one (mu_p, K) subset; feature is the record
    field named in feature_name ("log_residual" for the residual-indicator
    baseline, "mu" for the viscosity-only baseline)."""

    method: str
    model: object
    feature_name: str
    mu_p: float
    k_pod: int

    def predict_log_error(self, feature_values) -> np.ndarray:
        features = np.atleast_1d(np.asarray(feature_values, dtype=float))[:, None]
        return _predict_backend(self.method, self.model, features)


def train_error_model(method, records, settings: TrainSettings = TrainSettings()) -> ErrorModel:
    if len(records) < MIN_RECORDS:
        raise ValueError(f"need at least {MIN_RECORDS} records, got {len(records)}")
    features = _feature_matrix(records, ("mu", "mu_p", "k_pod"))
    targets = _targets(records, "log_err", unscaled=settings.unscaled_targets)
    model = _fit_backend(method, features, targets, settings, default_layers=6)
    scale = "linear" if settings.unscaled_targets else "log"
    return ErrorModel(method=method, model=model, target_scale=scale)


def train_dimension_model(
    method, records, settings: TrainSettings = TrainSettings(), clamp=(1, 199)
) -> DimensionModel:
    if len(records) < MIN_RECORDS:
        raise ValueError(f"need at least {MIN_RECORDS} records, got {len(records)}")
    features = _feature_matrix(records, ("mu_p", "log_err"))
    targets = np.array([float(r.k_pod) for r in records])
    model = _fit_backend(method, features, targets, settings, default_layers=5)
    return DimensionModel(method=method, model=model, clamp=clamp)


def _check_subset(records):
    if len(records) < 2:
        raise ValueError("baseline subsets need at least 2 records")
    mu_ps = {r.mu_p for r in records}
    ks = {r.k_pod for r in records}
    if len(mu_ps) != 1 or len(ks) != 1:
        raise ValueError(
            f"baseline subset must share one (mu_p, K); got {sorted(mu_ps)} x {sorted(ks)}"
        )
    return mu_ps.pop(), ks.pop()


def train_romes_model(method, records, settings: TrainSettings = TrainSettings()) -> BaselineModel:
    mu_p, k = _check_subset(records)
    features = _feature_matrix(records, ("log_residual",))
    targets = _targets(records, "log_err")
    model = _fit_backend(method, features, targets, settings, default_layers=6)
    return BaselineModel(method=method, model=model, feature_name="log_residual",
                         mu_p=mu_p, k_pod=k)


def train_mfc_model(method, records, settings: TrainSettings = TrainSettings()) -> BaselineModel:
    mu_p, k = _check_subset(records)
    features = _feature_matrix(records, ("mu",))
    targets = _targets(records, "log_err")
    model = _fit_backend(method, features, targets, settings, default_layers=6)
    return BaselineModel(method=method, model=model, feature_name="mu",
                         mu_p=mu_p, k_pod=k)


@dataclass
class MetricsReport:
    """Per-fold mean absolute errors and their spread, plus the aggregates."""

    e_folds: list = field(default_factory=list)
    var_folds: list = field(default_factory=list)

    @property
    def e(self) -> float:
        return float(np.mean(self.e_folds))

    @property
    def var(self) -> float:
        if len(self.e_folds) < 2:
            return 0.0
        return float(np.sum((np.asarray(self.e_folds) - self.e) ** 2) / (len(self.e_folds) - 1))


def fold_metrics(y_pred, y_true, var_mode: str = "abs_errors") -> tuple[float, float]:
    """Mean absolute error of one fold and the matching variance.

    var_mode "abs_errors" takes the sample variance of |y_pred - y_true|
    around the fold mean; "literal" keeps the printed form that mixes raw
    predictions with the mean of absolute errors.
    """
    y_pred = np.asarray(y_pred, dtype=float)
    y_true = np.asarray(y_true, dtype=float)
    if y_pred.size == 0:
        raise ValueError("empty test set")
    abs_err = np.abs(y_pred - y_true)
    e_fold = float(abs_err.mean())
    if y_pred.size < 2:
        return e_fold, 0.0
    basis = abs_err if var_mode == "abs_errors" else y_pred
    var_fold = float(np.sum((basis - e_fold) ** 2) / (basis.size - 1))
    return e_fold, var_fold


def evaluate(y_pred, y_true, var_mode: str = "abs_errors") -> MetricsReport:
    e_fold, var_fold = fold_metrics(y_pred, y_true, var_mode)
    return MetricsReport(e_folds=[e_fold], var_folds=[var_fold])


_TRAINERS = {
    "mplrom-error": train_error_model,
    "mplrom-dim": train_dimension_model,
    "romes": train_romes_model,
    "mfc": train_mfc_model,
}


def _model_truth(kind, records):
    if kind == "mplrom-dim":
        return np.array([float(r.k_pod) for r in records])
    return np.array([r.log_err for r in records])


def _model_predictions(kind, model, records):
    if kind == "mplrom-error":
        return model.predict_log_error(
            [r.mu for r in records], [r.mu_p for r in records],
            [r.k_pod for r in records],
        )
    if kind == "mplrom-dim":
        return model.predict_dimension(
            [r.mu_p for r in records], [r.log_err for r in records]
        ).astype(float)
    return model.predict_log_error([getattr(r, model.feature_name) for r in records])


@dataclass
class CrossvalResult:
    report: MetricsReport
    fold_true: list = field(default_factory=list)
    fold_pred: list = field(default_factory=list)


def _crossval_fold(args):
    kind, method, records, settings, train_idx, test_idx, var_mode = args
    trainer = _TRAINERS[kind]
    model = trainer(method, [records[i] for i in train_idx], settings)
    test = [records[i] for i in test_idx]
    y_true = _model_truth(kind, test)
    y_pred = _model_predictions(kind, model, test)
    e_fold, var_fold = fold_metrics(y_pred, y_true, var_mode)
    return e_fold, var_fold, y_true, y_pred


def crossval(
    kind: str,
    method: str,
    records,
    k: int = 5,
    seed: int = 0,
    settings: TrainSettings = TrainSettings(),
    var_mode: str = "abs_errors",
    jobs: int = 1,
) -> CrossvalResult:
    """K-fold cross-validation; folds may train in parallel processes."""
    if kind not in _TRAINERS:
        raise ValueError(f"unknown model kind {kind!r}")
    folds = kfold(len(records), k=k, seed=seed)
    tasks = []
    for fold in range(k):
        test_idx = folds.fold_indices(fold)
        train_idx = np.flatnonzero(folds.assignment != fold)
        # stagger training seeds so restarts differ across folds
        fold_settings = replace(settings, seed=settings.seed + fold)
        tasks.append((kind, method, records, fold_settings, train_idx, test_idx, var_mode))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, k)) as pool:
            outcomes = list(pool.map(_crossval_fold, tasks))
    else:
        outcomes = [_crossval_fold(t) for t in tasks]
    result = CrossvalResult(report=MetricsReport())
    for e_fold, var_fold, y_true, y_pred in outcomes:
        result.report.e_folds.append(e_fold)
        result.report.var_folds.append(var_fold)
        result.fold_true.append(y_true)
        result.fold_pred.append(y_pred)
    return result


def subset_records(records) -> dict:
    """Group error records by (mu_p, K); the unit the baselines train on."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.mu_p, r.k_pod), []).append(r)
    return groups


def save_surrogate(path, kind: str, model, metadata: dict | None = None):
    """Write any of the four surrogate flavors to one JSON file."""
    backing = model.model
    if isinstance(backing, gp.GpModel):
        payload = gp.to_payload(backing)
    else:
        payload = ann.to_payload(backing)
    doc = {
        "surrogate": kind,
        "method": model.method,
        "metadata": metadata or {},
        "backing": payload,
    }
    if kind == "mplrom-error":
        doc["target_scale"] = model.target_scale
    elif kind == "mplrom-dim":
        doc["clamp"] = list(model.clamp)
    else:
        doc["feature_name"] = model.feature_name
        doc["mu_p"] = model.mu_p
        doc["k_pod"] = model.k_pod
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_surrogate(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    backing = doc["backing"]
    model = gp.from_payload(backing) if backing["kind"] == "gp" else ann.from_payload(backing)
    kind = doc["surrogate"]
    if kind == "mplrom-error":
        return kind, ErrorModel(method=doc["method"], model=model,
                                target_scale=doc["target_scale"])
    if kind == "mplrom-dim":
        return kind, DimensionModel(method=doc["method"], model=model,
                                    clamp=tuple(doc["clamp"]))
    if kind in ("romes", "mfc"):
        return kind, BaselineModel(
            method=doc["method"], model=model, feature_name=doc["feature_name"],
            mu_p=doc["mu_p"], k_pod=doc["k_pod"],
        )
    raise ValueError(f"unknown surrogate kind {kind!r} in {path}")
