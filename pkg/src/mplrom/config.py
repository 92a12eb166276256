"""Flat key=value run configuration with defaults, env override, and hashing.

Config files hold `key = value` lines with `#` comments. Unknown keys are
rejected so typos fail loudly. The environment variable MPLROM_SEED overrides
the seed. Every run can embed the sha256 hash of its fully resolved config in
its artifacts, which makes replays checkable.
"""

from __future__ import annotations

import hashlib
import os

__all__ = ["DEFAULTS", "ConfigError", "parse_config_text", "resolve_config", "config_hash"]


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "seed": 0,
    "jobs": 1,
    # discretization
    "ns": 201,
    "nt": 301,
    "length": 1.0,
    "t_final": 1.0,
    "newton_max_iter": 50,
    "newton_tol": 1e-10,
    # single-solve / sweep parameters
    "mu": 0.7,
    "mu_min": 0.01,
    "mu_max": 1.0,
    # dataset presets
    "preset": "full",
    # training
    "train_frac": 0.8,
    "cv_folds": 5,
    "gp_restarts": 5,
    "gp_max_train": 2000,
    "gp_distance": "squared",
    "ann_hidden_layers": 0,  # 0 selects the per-model default (6 error / 5 dim)
    "ann_hidden_width": 20,
    "ann_epochs": 8000,
    "ann_learning_rate": 5e-3,
    "ann_batch_size": 0,  # 0 trains full batch
    # feasible-interval search
    "feasible_step": 0.001,
    "oracle_step": 0.005,
    # domain decomposition
    "decomp_a": 0.01,
    "decomp_b": 1.0,
    "decomp_eps0": 1e-2,
    "decomp_delta_r": 5e-3,
    "decomp_r0": 0.5,
    "decomp_k_pod": 9,
    "decomp_beta1": 1.2,
    "decomp_beta2": 0.9,
    "decomp_beta3": 1.4,
    "decomp_mu_p0": 0.87,
}


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"cannot parse value for {key!r}: {raw!r}") from exc


def parse_config_text(text: str) -> dict:
    """Parse `key = value` lines; '#' starts a comment; unknown keys reject."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = body.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def resolve_config(path=None, overrides: dict | None = None) -> dict:
    """defaults <- config file <- explicit overrides <- MPLROM_SEED env var."""
    config = dict(DEFAULTS)
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            config.update(parse_config_text(fh.read()))
    for key, value in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        if value is not None:
            config[key] = value
    env_seed = os.environ.get("MPLROM_SEED")
    if env_seed is not None:
        try:
            config["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"MPLROM_SEED must be an integer, got {env_seed!r}") from exc
    return config


def config_hash(config: dict) -> str:
    canonical = "\n".join(f"{k} = {config[k]!r}" for k in sorted(config))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
