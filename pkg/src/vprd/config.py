"""Run configuration.

Precedence, lowest first: built-in defaults, the ``VPRD_SEED`` environment
variable (seed only), the JSON config file, command-line flags.
"""
from __future__ import annotations

import json
import os
import warnings
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .synthetic import SynthConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    seed: int = 42
    # split
    train_fraction: float = 0.8
    val_fraction: float = 0.1
    test_fraction: float = 0.1
    # model and optimisation (published values)
    hidden: int = 294
    dropout: float = 0.45
    lr: float = 0.005
    sched_factor: float = 0.05
    sched_patience: int = 238
    min_lr: float = 0.0
    es_patience: int = 1225
    loss: str = "mse"
    alpha: float = 0.0
    alpha_ceiling: float = 1.0
    reduction: str = "mean_per_element"
    max_steps: int = 50_000
    standardize: bool = True
    val_loss: str = "mse"
    # preprocessing
    smooth_radius: int = 10
    padding: int = 10
    otsu_bins: int = 256
    # synthetic data
    n_samples: int = 2826
    d_in: int = 22
    d_out: int = 567
    noise_std: float = 0.01
    jitter_std_px: float = 0.0
    mapping: str = "bump"
    image_rows: int = 48
    # evaluation
    pairing: str = "lower"

    @property
    def fractions(self) -> tuple[float, float, float]:
        return self.train_fraction, self.val_fraction, self.test_fraction

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: v for k, v in asdict(self).items() if k in names})

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            n_samples=self.n_samples, d_in=self.d_in, d_out=self.d_out, seed=self.seed,
            noise_std=self.noise_std, jitter_std_px=self.jitter_std_px, mapping=self.mapping,
            image_rows=self.image_rows,
        )

    def validate(self) -> "Config":
        for name in ("smooth_radius", "otsu_bins", "n_samples", "d_in", "d_out"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.padding < 0:
            raise ConfigError("padding must be >= 0")
        if self.pairing not in ("lower", "upper"):
            raise ConfigError("pairing must be 'lower' or 'upper'")
        if any(f <= 0 for f in self.fractions) or abs(sum(self.fractions) - 1) > 1e-9:
            raise ConfigError("split fractions must be positive and sum to 1")
        try:
            with warnings.catch_warnings():
                # training warns about large alpha itself
                warnings.simplefilter("ignore")
                self.train_config().validate()
            self.synth_config().validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def _coerce(name: str, value, kind):
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true or false")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{name} must be a string, got {value!r}")
    return value


_TYPES = {"int": int, "float": float, "bool": bool, "str": str}


def apply_overrides(cfg: Config, overrides: dict) -> Config:
    known = {f.name: _TYPES[f.type] for f in fields(Config)}
    unknown = sorted(set(overrides) - set(known))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    for key, value in overrides.items():
        setattr(cfg, key, _coerce(key, value, known[key]))
    return cfg


def load_config(path=None, flags: dict | None = None, env=None) -> Config:
    env = os.environ if env is None else env
    cfg = Config()
    if env.get("VPRD_SEED", "").strip():
        try:
            cfg.seed = int(env["VPRD_SEED"])
        except ValueError:
            raise ConfigError(f"VPRD_SEED must be an integer, got {env['VPRD_SEED']!r}") from None
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        apply_overrides(cfg, data)
    if flags:
        apply_overrides(cfg, {k: v for k, v in flags.items() if v is not None})
    return cfg.validate()
