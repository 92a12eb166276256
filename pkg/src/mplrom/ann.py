"""Multilayer perceptron regression built on plain numpy.

Hidden layers use hyperbolic tangent activations, the output is linear, and
training runs backpropagation with a seeded Adam optimizer (plain gradient
descent available as a switch). Inputs and targets are standardized before
training and the transform is inverted at prediction time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MlpArchitecture",
    "MlpModel",
    "TrainingConfig",
    "TrainingDivergence",
    "init_model",
    "forward",
    "loss_and_grad",
    "train",
    "predict",
    "save_model",
    "load_model",
]


class TrainingDivergence(RuntimeError):
    """Training loss became non-finite; retry with a smaller step size."""


@dataclass(frozen=True)
class MlpArchitecture:
    input_dim: int
    hidden_layers: int = 6
    hidden_width: int = 20

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_layers < 1 or self.hidden_width < 1:
            raise ValueError("architecture counts must be positive")

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim] + [self.hidden_width] * self.hidden_layers + [1]
        return list(zip(dims[:-1], dims[1:]))


@dataclass
class TrainingConfig:
    seed: int = 0
    max_epochs: int = 8000
    batch_size: int | None = None  # None trains full batch
    learning_rate: float = 5e-3
    min_learning_rate: float = 1e-6
    loss_tol: float = 0.0  # stop once training MSE drops to this level
    optimizer: str = "adam"  # or "sgd"
    # Safeguard: after the warmup, a relative epoch-loss increase beyond this
    # tolerance halves the learning rate.
    regress_tol: float = 0.05
    safeguard_warmup: int = 100

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class MlpModel:
    """Network parameters plus the standardization constants used in training."""

    weights: list  # per layer, shape (fan_out, fan_in)
    biases: list  # per layer, shape (fan_out,)
    x_mean: np.ndarray = None
    x_std: np.ndarray = None
    y_mean: float = 0.0
    y_std: float = 1.0
    final_loss: float = np.nan
    loss_history: list = field(default_factory=list)
    lr_history: list = field(default_factory=list)

    @property
    def n_layers(self) -> int:
        return len(self.weights)


def init_model(arch: MlpArchitecture, seed: int = 0) -> MlpModel:
    """Scaled-uniform fan-in initialization, seeded; keeps tanh units unsaturated."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in arch.layer_dims():
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights=weights, biases=biases,
                    x_mean=np.zeros(arch.input_dim), x_std=np.ones(arch.input_dim))


def _forward_pass(model: MlpModel, z: np.ndarray):
    """Returns the activations per layer; z has shape (n, input_dim)."""
    activations = [z]
    a = z
    last = model.n_layers - 1
    for layer, (w, b) in enumerate(zip(model.weights, model.biases)):
        x = a @ w.T + b
        a = x if layer == last else np.tanh(x)
        activations.append(a)
    return activations


def forward(model: MlpModel, z: np.ndarray) -> np.ndarray:
    """Raw network output (no standardization); accepts (n, r) or a single (r,)."""
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    out = _forward_pass(model, np.atleast_2d(z))[-1].ravel()
    return float(out[0]) if single and out.size == 1 else out


def loss_and_grad(model: MlpModel, z: np.ndarray, y: np.ndarray):
    """Mean squared error over the batch and exact gradients via backpropagation."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("empty batch")
    n = y.size
    acts = _forward_pass(model, z)
    pred = acts[-1].ravel()
    err = pred - y
    loss = float(np.mean(err**2))

    grad_w = [None] * model.n_layers
    grad_b = [None] * model.n_layers
    delta = (2.0 / n) * err[:, None]  # dL/d(output)
    for layer in range(model.n_layers - 1, -1, -1):
        a_prev = acts[layer]
        grad_w[layer] = delta.T @ a_prev
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer]) * (1.0 - acts[layer] ** 2)
    return loss, grad_w, grad_b


def train(arch: MlpArchitecture, z: np.ndarray, y: np.ndarray, cfg: TrainingConfig) -> MlpModel:
    """Seeded deterministic training; returns the model with its loss history.

    Mini-batch order is drawn from the training RNG, so it is fixed by the
    seed. Divergence (non-finite loss) aborts with TrainingDivergence.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if z.shape[0] == 1 and np.asarray(y).size > 1:
        z = z.T
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("training data is empty")
    if z.shape[1] != arch.input_dim:
        raise ValueError("data feature count does not match the architecture")

    x_mean = z.mean(axis=0)
    x_std = z.std(axis=0)
    x_std = np.where(x_std > 0, x_std, 1.0)
    y_mean = float(y.mean())
    y_std = float(y.std())
    y_std = y_std if y_std > 0 else 1.0
    zs = (z - x_mean) / x_std
    ys = (y - y_mean) / y_std

    model = init_model(arch, seed=cfg.seed)
    model.x_mean, model.x_std = x_mean, x_std
    model.y_mean, model.y_std = y_mean, y_std

    rng = np.random.default_rng(cfg.seed + 1)
    lr = cfg.learning_rate
    use_adam = cfg.optimizer == "adam"
    if use_adam:
        m_w = [np.zeros_like(w) for w in model.weights]
        v_w = [np.zeros_like(w) for w in model.weights]
        m_b = [np.zeros_like(b) for b in model.biases]
        v_b = [np.zeros_like(b) for b in model.biases]
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        step = 0

    n = ys.size
    batch = n if cfg.batch_size is None else min(cfg.batch_size, n)
    prev_loss = np.inf
    for epoch in range(cfg.max_epochs):
        if batch == n:
            slices = [(zs, ys)]
        else:
            order = rng.permutation(n)
            slices = [
                (zs[order[i : i + batch]], ys[order[i : i + batch]])
                for i in range(0, n, batch)
            ]
        epoch_loss = 0.0
        for zb, yb in slices:
            loss, grad_w, grad_b = loss_and_grad(model, zb, yb)
            epoch_loss += loss * yb.size
            if use_adam:
                step += 1
                corr1 = 1.0 - beta1**step
                corr2 = 1.0 - beta2**step
                for i in range(model.n_layers):
                    m_w[i] = beta1 * m_w[i] + (1 - beta1) * grad_w[i]
                    v_w[i] = beta2 * v_w[i] + (1 - beta2) * grad_w[i] ** 2
                    model.weights[i] -= lr * (m_w[i] / corr1) / (np.sqrt(v_w[i] / corr2) + eps)
                    m_b[i] = beta1 * m_b[i] + (1 - beta1) * grad_b[i]
                    v_b[i] = beta2 * v_b[i] + (1 - beta2) * grad_b[i] ** 2
                    model.biases[i] -= lr * (m_b[i] / corr1) / (np.sqrt(v_b[i] / corr2) + eps)
            else:
                for i in range(model.n_layers):
                    model.weights[i] -= lr * grad_w[i]
                    model.biases[i] -= lr * grad_b[i]
        epoch_loss /= n
        if not np.isfinite(epoch_loss):
            raise TrainingDivergence(
                f"loss became non-finite at epoch {epoch}; reduce the step size"
            )
        model.loss_history.append(epoch_loss)
        model.lr_history.append(lr)
        if (
            epoch >= cfg.safeguard_warmup
            and epoch_loss > prev_loss * (1.0 + cfg.regress_tol)
        ):
            lr = max(lr * 0.5, cfg.min_learning_rate)
        prev_loss = epoch_loss
        if epoch_loss <= cfg.loss_tol:
            break
    model.final_loss = float(model.loss_history[-1])
    return model


def predict(model: MlpModel, z: np.ndarray) -> np.ndarray:
    """Standardize, run the network, and invert the target standardization."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    zs = (z - model.x_mean) / model.x_std
    out = _forward_pass(model, zs)[-1].ravel()
    return out * model.y_std + model.y_mean


def to_payload(model: MlpModel, metadata: dict | None = None) -> dict:
    return {
        "kind": "mlp",
        "metadata": metadata or {},
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "x_mean": np.asarray(model.x_mean).tolist(),
        "x_std": np.asarray(model.x_std).tolist(),
        "y_mean": model.y_mean,
        "y_std": model.y_std,
        "final_loss": model.final_loss,
    }


def from_payload(payload: dict) -> MlpModel:
    if payload.get("kind") != "mlp":
        raise ValueError("payload does not hold an MLP model")
    return MlpModel(
        weights=[np.asarray(w, dtype=float) for w in payload["weights"]],
        biases=[np.asarray(b, dtype=float) for b in payload["biases"]],
        x_mean=np.asarray(payload["x_mean"], dtype=float),
        x_std=np.asarray(payload["x_std"], dtype=float),
        y_mean=float(payload["y_mean"]),
        y_std=float(payload["y_std"]),
        final_loss=float(payload["final_loss"]),
    )


def save_model(path, model: MlpModel, metadata: dict | None = None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_payload(model, metadata), fh)


def load_model(path) -> MlpModel:
    with open(path, encoding="utf-8") as fh:
        return from_payload(json.load(fh))
