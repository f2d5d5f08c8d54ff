"""One-hidden-layer perceptron in numpy with hand-written gradients.

Shapes follow the row-major batch convention: inputs are (n, d_in), outputs
(n, d_out). ``W1`` is (hidden, d_in) and ``W2`` is (d_out, hidden), so a
forward pass is ``relu(X @ W1.T + b1) @ W2.T + b2``.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .rng import stream

PAPER_DIMS = (22, 294, 567)


class ShapeError(ValueError):
    pass


class StaleCacheError(RuntimeError):
    pass


@dataclass
class MlpModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    activation: str = "relu"
    # bumped whenever parameters change; lets backward reject old caches
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        h, d_in = self.W1.shape
        d_out, h2 = self.W2.shape
        if h2 != h or self.b1.shape != (h,) or self.b2.shape != (d_out,):
            raise ShapeError("inconsistent parameter shapes")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.W1.shape[1], self.W1.shape[0], self.W2.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params().values())


def init_weights(dims=PAPER_DIMS, seed: int = 42, rng: np.random.Generator | None = None) -> MlpModel:
    """He-uniform weights U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases."""
    d_in, h, d_out = (int(d) for d in dims)
    if min(d_in, h, d_out) < 1:
        raise ValueError(f"invalid dims {dims}")
    rng = rng if rng is not None else stream(seed, "init")
    lim1 = math.sqrt(6.0 / d_in)
    lim2 = math.sqrt(6.0 / h)
    W1 = rng.uniform(-lim1, lim1, size=(h, d_in))
    W2 = rng.uniform(-lim2, lim2, size=(d_out, h))
    return MlpModel(W1, np.zeros(h), W2, np.zeros(d_out))


@dataclass(frozen=True)
class DropoutConfig:
    p: float = 0.45
    mode: str = "train"

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ValueError("dropout p must lie in [0, 1)")
        if self.mode not in ("train", "eval"):
            raise ValueError("dropout mode is 'train' or 'eval'")


EVAL = DropoutConfig(0.0, "eval")


@dataclass
class ForwardCache:
    x: np.ndarray
    z1: np.ndarray
    h: np.ndarray  # post-activation, post-dropout
    mask: np.ndarray | None  # already scaled by 1/(1-p)
    model_id: int
    version: int


def forward(model: MlpModel, inputs, dropout: DropoutConfig = EVAL,
            rng: np.random.Generator | None = None):
    """Return ``(outputs, cache)``.

    Train mode uses inverted dropout on the hidden layer: units are zeroed
    with probability p and survivors scaled by 1/(1-p). Eval mode is the
    plain deterministic network.
    """
    x = np.asarray(inputs, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.W1.shape[1]:
        raise ShapeError(f"expected input width {model.W1.shape[1]}, got shape {np.shape(inputs)}")
    z1 = x @ model.W1.T
    z1 += model.b1
    h = np.maximum(z1, 0.0)
    mask = None
    if dropout.mode == "train" and dropout.p > 0:
        if rng is None:
            raise ValueError("train-mode dropout needs a random generator")
        keep = rng.random(h.shape) >= dropout.p
        mask = keep * (1.0 / (1.0 - dropout.p))
        h *= mask
    out = h @ model.W2.T
    out += model.b2
    cache = ForwardCache(x, z1, h, mask, id(model), model.version)
    return (out[0] if squeeze else out), cache


# --- losses ---------------------------------------------------------------

@dataclass(frozen=True)
class LossConfig:
    kind: str = "mse"  # "mse" or "anti_mean"
    alpha: float = 0.0
    y_hat: np.ndarray | None = None
    reduction: str = "mean_per_element"  # or "sum"

    def __post_init__(self):
        if self.kind not in ("mse", "anti_mean"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.reduction not in ("sum", "mean_per_element"):
            raise ValueError(f"unknown reduction {self.reduction!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.kind == "anti_mean" and self.y_hat is None:
            raise ValueError("anti_mean loss needs the training-label mean y_hat")


def _check_pair(pred, label):
    pred = np.asarray(pred, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    if pred.shape != label.shape:
        raise ShapeError(f"prediction shape {pred.shape} != label shape {label.shape}")
    return pred, label


def _divisor(reduction: str, size: int) -> float:
    return 1.0 if reduction == "sum" else float(size)


def loss_mse(pred, label, reduction: str = "mean_per_element") -> float:
    pred, label = _check_pair(pred, label)
    d = pred - label
    total = float(np.sum(d * d))
    if reduction == "sum":
        return total
    if reduction == "mean_per_element":
        return total / d.size
    raise ValueError(f"unknown reduction {reduction!r}")


def loss_anti_mean(pred, label, cfg: LossConfig) -> float:
    """sum (x - y)^2 - alpha * sum (x - y_hat)^2, both terms over the same divisor."""
    if cfg.y_hat is None:
        raise ValueError("anti_mean loss needs y_hat")
    pred, label = _check_pair(pred, label)
    base = loss_mse(pred, label, cfg.reduction)
    if cfg.alpha == 0:
        return base
    y_hat = np.broadcast_to(np.asarray(cfg.y_hat, dtype=np.float64), pred.shape)
    e = pred - y_hat
    penalty = float(np.sum(e * e)) / _divisor(cfg.reduction, pred.size)
    return base - cfg.alpha * penalty


def loss_value(pred, label, cfg: LossConfig) -> float:
    if cfg.kind == "mse":
        return loss_mse(pred, label, cfg.reduction)
    return loss_anti_mean(pred, label, cfg)


def loss_and_grad(pred, label, cfg: LossConfig) -> tuple[float, np.ndarray]:
    """Loss and its gradient with respect to ``pred``."""
    pred, label = _check_pair(pred, label)
    div = _divisor(cfg.reduction, pred.size)
    d = pred - label
    value = float(np.sum(d * d)) / div
    grad = (2.0 / div) * d
    if cfg.kind == "anti_mean" and cfg.alpha != 0:
        e = pred - np.broadcast_to(np.asarray(cfg.y_hat, dtype=np.float64), pred.shape)
        value -= cfg.alpha * float(np.sum(e * e)) / div
        grad -= (2.0 * cfg.alpha / div) * e
    return value, grad


# --- backward -------------------------------------------------------------

@dataclass
class Gradients:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}


def backward(model: MlpModel, cache: ForwardCache, loss_grad) -> Gradients:
    if cache.model_id != id(model) or cache.version != model.version:
        raise StaleCacheError("cache was produced by a different model state")
    g = np.asarray(loss_grad, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != (cache.x.shape[0], model.W2.shape[0]):
        raise ShapeError(f"loss gradient shape {g.shape} does not match outputs")
    dW2 = g.T @ cache.h
    db2 = g.sum(axis=0)
    dh = g @ model.W2
    if cache.mask is not None:
        dh *= cache.mask
    dz = dh * (cache.z1 > 0)
    dW1 = dz.T @ cache.x
    db1 = dz.sum(axis=0)
    return Gradients(dW1, db1, dW2, db2)


# --- optimizer, scheduler, stopping --------------------------------------

@dataclass
class AdamState:
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(model: MlpModel, grads: Gradients, state: AdamState) -> MlpModel:
    """In-place Adam update with bias correction; returns ``model``."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in model.params().items():
        g = getattr(grads, name)
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    model.version += 1
    return model


@dataclass
class PlateauScheduler:
    """Multiply lr by ``factor`` once more than ``patience`` validations fail to improve."""

    lr: float = 0.005
    factor: float = 0.05
    patience: int = 238
    min_lr: float = 0.0
    min_delta: float = 0.0
    best: float = math.inf
    wait: int = 0
    n_reductions: int = 0

    def step(self, val_loss: float) -> float:
        if not math.isfinite(val_loss):
            raise ValueError("validation loss is not finite")
        if val_loss < self.best - self.min_delta:
            self.best = val_loss
            self.wait = 0
            return self.lr
        self.wait += 1
        if self.wait > self.patience:
            new_lr = max(self.lr * self.factor, self.min_lr)
            if new_lr < self.lr:
                self.lr = new_lr
                self.n_reductions += 1
            self.wait = 0
        return self.lr


@dataclass
class EarlyStopper:
    """Stops once ``patience`` consecutive validations fail to improve.

    Keeps a copy of the model from the best validation step.
    """

    patience: int = 1225
    min_delta: float = 0.0
    best: float = math.inf
    wait: int = 0
    best_step: int = -1
    best_snapshot: MlpModel | None = None
    steps_seen: int = 0

    def check(self, val_loss: float, model: MlpModel) -> bool:
        """Record one validation; return True when training should stop."""
        if not math.isfinite(val_loss):
            raise ValueError("validation loss is not finite")
        self.steps_seen += 1
        if val_loss < self.best - self.min_delta:
            self.best = val_loss
            self.wait = 0
            self.best_step = self.steps_seen
            self.best_snapshot = model.copy()
            return False
        self.wait += 1
        return self.wait >= self.patience
