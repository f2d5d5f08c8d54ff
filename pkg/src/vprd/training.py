"""Full-batch training loop.

Every step is one forward/backward/Adam update on the whole training split
(with dropout), followed by one dropout-free pass over the whole validation
split. The validation loss drives the plateau scheduler and early stopping,
and the returned model is the early stopper's best snapshot.
"""
from __future__ import annotations

import csv
import math
import os
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import mlp
from .data_model import Dataset, SplitIndices, Standardization, standardize_apply, standardize_fit
from .rng import stream

ALPHA_WARN = 0.05


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    seed: int = 42
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
    # "mse": plain fit on validation; "objective": the training loss function
    val_loss: str = "mse"

    def validate(self) -> "TrainConfig":
        positive = {
            "hidden": self.hidden, "lr": self.lr, "sched_factor": self.sched_factor,
            "sched_patience": self.sched_patience, "es_patience": self.es_patience,
            "max_steps": self.max_steps,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value!r}")
        if not 0 <= self.dropout < 1:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout!r}")
        if self.sched_factor >= 1:
            raise ValueError("sched_factor must be < 1")
        if self.min_lr < 0:
            raise ValueError("min_lr must be >= 0")
        if self.loss not in ("mse", "anti_mean"):
            raise ValueError(f"loss must be 'mse' or 'anti_mean', got {self.loss!r}")
        if self.val_loss not in ("mse", "objective"):
            raise ValueError(f"val_loss must be 'mse' or 'objective', got {self.val_loss!r}")
        if self.alpha < 0 or self.alpha > self.alpha_ceiling:
            raise ValueError(f"alpha must lie in [0, {self.alpha_ceiling}], got {self.alpha!r}")
        if self.alpha > ALPHA_WARN:
            warnings.warn(
                f"alpha={self.alpha} exceeds {ALPHA_WARN}; larger penalties gave worse "
                "test MSE than plain MSE in the reference experiments",
                stacklevel=2,
            )
        return self


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    stop_step: int = 0
    stop_reason: str = ""
    best_step: int = 0
    best_val_loss: float = math.inf
    duration_s: float = 0.0
    blas_threads: str = ""

    @property
    def n_steps(self) -> int:
        return len(self.train_loss)

    def to_dict(self, include_timing: bool = True) -> dict:
        d = asdict(self)
        if not include_timing:
            d.pop("duration_s")
        return d

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "train_loss", "val_loss", "lr"])
            for i, row in enumerate(zip(self.train_loss, self.val_loss, self.lr), start=1):
                w.writerow([i, *(repr(float(v)) for v in row)])


class TrainResult(NamedTuple):
    model: mlp.MlpModel
    report: TrainReport
    label_mean: np.ndarray
    standardization: Standardization | None


def label_mean(train_profiles) -> np.ndarray:
    p = np.asarray(train_profiles, dtype=np.float64)
    if p.ndim == 1:
        p = p[None, :]
    if p.shape[0] == 0:
        raise ValueError("label_mean of an empty set")
    return p.mean(axis=0)


def _thread_note() -> str:
    keys = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")
    return ",".join(f"{k}={os.environ.get(k, '')}" for k in keys) + f",cpus={os.cpu_count()}"


def train(dataset: Dataset, split: SplitIndices, cfg: TrainConfig | None = None,
          standardization: Standardization | None = None) -> TrainResult:
    cfg = (cfg or TrainConfig()).validate()
    train_set = dataset.subset(split.train)
    val_set = dataset.subset(split.val)

    if cfg.standardize:
        if standardization is None:
            standardization = standardize_fit(train_set.params, train_set.param_names)
        x_train = standardize_apply(train_set.params, standardization)
        x_val = standardize_apply(val_set.params, standardization)
    else:
        standardization = None
        x_train, x_val = train_set.params, val_set.params
    y_train, y_val = train_set.profiles, val_set.profiles
    y_hat = label_mean(y_train)

    loss_cfg = mlp.LossConfig(cfg.loss, cfg.alpha, y_hat if cfg.loss == "anti_mean" else None,
                              cfg.reduction)
    val_cfg = loss_cfg if cfg.val_loss == "objective" else mlp.LossConfig("mse", 0.0, None, cfg.reduction)

    model = mlp.init_weights((dataset.d_in, cfg.hidden, dataset.d_out), cfg.seed)
    drop = mlp.DropoutConfig(cfg.dropout, "train")
    drop_rng = stream(cfg.seed, "dropout")
    adam = mlp.AdamState(lr=cfg.lr)
    sched = mlp.PlateauScheduler(lr=cfg.lr, factor=cfg.sched_factor, patience=cfg.sched_patience,
                                 min_lr=cfg.min_lr)
    stopper = mlp.EarlyStopper(patience=cfg.es_patience)
    report = TrainReport(blas_threads=_thread_note())

    t0 = time.perf_counter()
    for step in range(1, cfg.max_steps + 1):
        # overflow is reported below as divergence, not as a numpy warning
        with np.errstate(over="ignore", invalid="ignore"):
            out, cache = mlp.forward(model, x_train, drop, drop_rng)
            loss, grad = mlp.loss_and_grad(out, y_train, loss_cfg)
        if not math.isfinite(loss):
            raise TrainingDiverged(f"training loss became {loss} at step {step}")
        mlp.adam_step(model, mlp.backward(model, cache, grad), adam)

        val_out, _ = mlp.forward(model, x_val)
        val = mlp.loss_value(val_out, y_val, val_cfg)
        if not math.isfinite(val) or not model.all_finite():
            raise TrainingDiverged(f"validation loss became {val} at step {step}")

        report.train_loss.append(loss)
        report.val_loss.append(val)
        report.lr.append(adam.lr)
        adam.lr = sched.step(val)
        if stopper.check(val, model):
            report.stop_reason = "early_stop"
            break
    else:
        report.stop_reason = "max_steps"
    report.duration_s = time.perf_counter() - t0
    report.stop_step = report.n_steps
    report.best_step = stopper.best_step
    report.best_val_loss = stopper.best
    return TrainResult(stopper.best_snapshot, report, y_hat, standardization)
