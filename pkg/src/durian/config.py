"""Experiment configuration: flat ``key = value`` files, flag overrides, validation."""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, fields
from pathlib import Path

from durian.errors import ConfigError

OBJECTIVES = ("grpo", "dapo")
SCOPES = ("batch", "global")
LOSS_STYLES = ("auto", "response-mean", "token-mean")
FULL_SCALE_LR = 1e-6


@dataclass
class ExperimentConfig:
    seed: int = 0
    steps: int = 200
    batch_size: int = 64
    rollout: int = 8
    objective: str = "dapo"
    eps: float = 0.2
    eps_low: float = 0.2
    eps_high: float = 0.28
    beta: float = 0.01
    loss_style: str = "auto"
    epochs: int = 1
    alpha: tuple = (0.6, 0.2, 0.2)
    groups_b: int = 12
    quantile_levels: tuple = (0.25, 0.75)
    quantile_scope: str = "batch"
    regroup: bool = True
    normalize_logprob: bool = True
    dynamic_sampling: bool = True
    mask_before_std: bool = True
    reward_weights: tuple = (0.1, 0.9)
    overlong_shaping: bool = False
    soft_cap: int = 8
    hard_cap: int = 12
    entropy_range: tuple = (0.3, 2.0)
    hardness_range: tuple = (0.0, 1.0)
    dims: tuple = (16, 8, 4, 4)
    max_len: int = 12
    temperature: float = 1.0
    lr: float = 0.5
    dataset_size: int = 512
    eval_size: int = 128
    diagnostics: bool = True
    out_dir: str = "runs/default"

    def validate(self):
        def need(ok, key, msg):
            if not ok:
                raise ConfigError(flag_name(key), msg)

        need(self.steps >= 0, "steps", "must be >= 0")
        need(self.batch_size >= 4, "batch_size", "must be >= 4")
        need(self.rollout >= 2, "rollout", "must be >= 2")
        need(self.objective in OBJECTIVES, "objective", f"must be one of {OBJECTIVES}")
        need(0 < self.eps < 1, "eps", "must be in (0, 1)")
        need(0 <= self.eps_low < 1, "eps_low", "must be in [0, 1)")
        need(self.eps_high >= self.eps_low, "eps_high", "must be >= eps-low")
        need(self.beta >= 0, "beta", "must be >= 0")
        need(self.loss_style in LOSS_STYLES, "loss_style", f"must be one of {LOSS_STYLES}")
        need(self.epochs >= 1, "epochs", "must be >= 1")
        need(len(self.alpha) == 3 and all(a >= 0 for a in self.alpha) and sum(self.alpha) > 0,
             "alpha", "needs three nonnegative weights, not all zero")
        need(1 <= self.groups_b <= self.batch_size, "groups_b",
             f"must be in [1, batch-size={self.batch_size}], got {self.groups_b}")
        need(len(self.quantile_levels) == 2 and 0 <= self.quantile_levels[0] <= self.quantile_levels[1] <= 1,
             "quantile_levels", "needs two ordered levels in [0, 1]")
        need(self.quantile_scope in SCOPES, "quantile_scope", f"must be one of {SCOPES}")
        need(len(self.reward_weights) == 2 and all(w >= 0 for w in self.reward_weights),
             "reward_weights", "needs two nonnegative weights")
        need(0 < self.soft_cap < self.hard_cap, "soft_cap", "need 0 < soft-cap < hard-cap")
        need(len(self.dims) == 4 and all(int(x) >= 1 for x in self.dims), "dims", "needs P,d,m,K >= 1")
        P, d, m, K = self.dims
        need(P >= 2 and K >= 2, "dims", "needs P >= 2 and K >= 2")
        max_h = math.log(min(P - 1, d))
        lo, hi = self.entropy_range
        need(0 <= lo <= hi <= max_h + 1e-12, "entropy_range",
             f"must satisfy 0 <= min <= max <= log(min(P-1, d)) = {max_h:.4f}")
        lo, hi = self.hardness_range
        need(0 <= lo <= hi <= 1, "hardness_range", "must satisfy 0 <= min <= max <= 1")
        need(self.max_len >= 3, "max_len", "must be >= 3")
        need(self.temperature > 0, "temperature", "must be > 0")
        need(self.lr > 0, "lr", "must be > 0")
        need(self.dataset_size >= self.batch_size, "dataset_size", "must be >= batch-size")
        need(self.eval_size >= 1, "eval_size", "must be >= 1")
        return self

    def to_text(self):
        lines = ["# resolved experiment configuration"]
        for f in fields(self):
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def flag_name(key):
    return key.replace("_", "-")


def _field_types():
    defaults = ExperimentConfig()
    return {f.name: type(getattr(defaults, f.name)) for f in fields(ExperimentConfig)}


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_scalar(raw, kind, key):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError(raw)
            return value
    except ValueError:
        raise ConfigError(flag_name(key), f"cannot parse {raw!r} as {kind.__name__}") from None
    return raw.strip()


def parse_value(key, raw):
    """Convert a raw string to the type of config field ``key``."""
    types = _field_types()
    key = key.replace("-", "_")
    if key not in types:
        raise ConfigError(flag_name(key), "unknown configuration key")
    kind = types[key]
    if kind is tuple:
        template = getattr(ExperimentConfig(), key)
        elem = type(template[0])
        parts = [p for p in raw.split(",") if p.strip()]
        return tuple(_parse_scalar(p, elem, key) for p in parts)
    return _parse_scalar(raw, kind, key)


def read_config_file(path):
    """Parse a flat ``key = value`` file into a dict of typed values."""
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(str(path), "config file not found") from None
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}", "expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = parse_value(key, raw)
    return values


def load_config(path=None, overrides=None, env=None):
    """Resolve defaults <- file <- overrides; ``DURIAN_SEED`` fills an unset seed."""
    env = os.environ if env is None else env
    values = {}
    if path is not None:
        values.update(read_config_file(path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        key = key.replace("-", "_")
        values[key] = parse_value(key, value) if isinstance(value, str) else value
    if "seed" not in values and env.get("DURIAN_SEED"):
        values["seed"] = parse_value("seed", env["DURIAN_SEED"])
    unknown = set(values) - set(_field_types())
    if unknown:
        raise ConfigError(flag_name(sorted(unknown)[0]), "unknown configuration key")
    return ExperimentConfig(**values).validate()
