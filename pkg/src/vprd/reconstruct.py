"""Per-shot photon power: predicted lasing-off minus measured lasing-on power."""
from __future__ import annotations

import gc
import itertools
import platform
import time
import tracemalloc
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .data_model import Standardization
from .mlp import MlpModel
from .rng import stream

# |z| above this after standardization means the caller passed already
# standardized (or wrong-unit) parameters
MAX_ABS_Z = 1e3


class InputError(ValueError):
    pass


class Predictor:
    """Eval-mode forward pass with its buffers allocated once.

    ``predict_into`` performs no heap allocation, so it can sit in a tight
    acquisition loop. Standardization is folded in at construction time.
    """

    def __init__(self, model: MlpModel, standardization: Standardization | None = None,
                 backend: str | None = None):
        self.model = model
        self.standardization = standardization
        d_in, h, d_out = model.dims
        if standardization is not None and len(standardization) != d_in:
            raise InputError(f"standardization has {len(standardization)} entries, model expects {d_in}")
        self.backend = backend or _kernels.backend()
        if self.backend == "numba":
            self._kernel = _kernels.dense_relu_forward_into_nb
        elif self.backend == "numpy":
            self._kernel = _kernels.dense_relu_forward_into_np
        else:
            raise ValueError(f"unknown backend {self.backend!r}")
        self._w1t = np.ascontiguousarray(model.W1.T)
        self._b1 = np.ascontiguousarray(model.b1)
        self._w2t = np.ascontiguousarray(model.W2.T)
        self._b2 = np.ascontiguousarray(model.b2)
        if standardization is not None:
            self._mean = np.ascontiguousarray(standardization.mean, dtype=np.float64)
            self._inv_std = 1.0 / standardization.std
        else:
            self._mean = np.zeros(d_in)
            self._inv_std = np.ones(d_in)
        self._z = np.empty(d_in)
        self._hidden = np.empty(h)
        self.d_in, self.d_out = d_in, d_out

    def predict_into(self, params: np.ndarray, out: np.ndarray) -> np.ndarray:
        """Raw machine parameters in, lasing-off profile written to ``out``."""
        self._kernel(params, self._mean, self._inv_std, self._z, self._w1t, self._b1,
                     self._w2t, self._b2, self._hidden, out)
        return out

    def check_input(self, params) -> np.ndarray:
        x = np.ascontiguousarray(params, dtype=np.float64)
        if x.shape != (self.d_in,):
            raise InputError(f"expected {self.d_in} machine parameters, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InputError("machine parameters contain non-finite values")
        if self.standardization is not None:
            z = (x - self._mean) * self._inv_std
            if np.max(np.abs(z)) > MAX_ABS_Z:
                raise InputError(
                    f"parameters lie {np.max(np.abs(z)):.3g} std from the training mean; "
                    "pass raw (unstandardized) readings in the training units"
                )
        return x

    def __call__(self, params) -> np.ndarray:
        x = self.check_input(params)
        return self.predict_into(x, np.empty(self.d_out))


def predict_lasing_off(model: MlpModel | Predictor, params,
                       standardization: Standardization | None = None) -> np.ndarray:
    """Deterministic lasing-off power profile for one shot's raw parameters."""
    pred = model if isinstance(model, Predictor) else Predictor(model, standardization)
    return pred(params)


@dataclass(frozen=True)
class PhotonPower:
    power: np.ndarray
    checkpoint_id: str = ""
    shot_index: int = -1


def photon_power(pred_lasing_off, measured_lasing_on, *, time_bin_pred: float | None = None,
                 time_bin_meas: float | None = None, checkpoint_id: str = "",
                 shot_index: int = -1) -> PhotonPower:
    """Element-wise predicted lasing-off minus measured lasing-on; no clamping."""
    a = np.asarray(pred_lasing_off, dtype=np.float64)
    b = np.asarray(measured_lasing_on, dtype=np.float64)
    if a.shape != b.shape:
        raise InputError(f"profile lengths differ: {a.shape} vs {b.shape}")
    if time_bin_pred is not None and time_bin_meas is not None and time_bin_pred != time_bin_meas:
        raise InputError(f"time binning differs: {time_bin_pred} fs vs {time_bin_meas} fs")
    return PhotonPower(a - b, checkpoint_id, shot_index)


@dataclass
class LatencyReport:
    mean_us: float
    std_us: float
    n_runs: int
    warmup_runs: int
    threads: int
    backend: str
    cpu: str
    paper_reference_us: float = 16.1
    latencies_us: list = field(default_factory=list, repr=False)

    def to_dict(self, include_samples: bool = False) -> dict:
        d = asdict(self)
        if not include_samples:
            d.pop("latencies_us")
        d["ratio_to_reference"] = self.mean_us / self.paper_reference_us
        return d


def _cpu_name() -> str:
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.startswith("model name"):
                    return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or platform.machine()


def _single_thread():
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return None
    return threadpool_limits(limits=1)


def bench_inference(model: MlpModel | Predictor, n_runs: int = 10_000, warmup: int = 100,
                    backend: str | None = None, seed: int = 0) -> LatencyReport:
    """Time single-shot eval-mode prediction on a fixed random input."""
    pred = model if isinstance(model, Predictor) else Predictor(model, backend=backend)
    rng = stream(seed, "bench")
    if pred.standardization is not None:
        x = pred.standardization.mean + pred.standardization.std * rng.standard_normal(pred.d_in)
    else:
        x = rng.standard_normal(pred.d_in)
    out = np.empty(pred.d_out)
    samples = np.empty(n_runs, dtype=np.int64)
    predict_into = pred.predict_into
    clock = time.perf_counter_ns
    limiter = _single_thread()
    gc_was_enabled = gc.isenabled()
    gc.disable()  # as timeit does; a collection pause is not inference time
    try:
        for _ in range(warmup):
            predict_into(x, out)
        for i in range(n_runs):
            t0 = clock()
            predict_into(x, out)
            samples[i] = clock() - t0
    finally:
        if gc_was_enabled:
            gc.enable()
        if limiter is not None:
            limiter.unregister()
    us = samples / 1e3
    return LatencyReport(
        mean_us=float(us.mean()), std_us=float(us.std()), n_runs=n_runs, warmup_runs=warmup,
        threads=1, backend=pred.backend, cpu=_cpu_name(), latencies_us=us.tolist(),
    )


@dataclass(frozen=True)
class AllocationReport:
    """Per-window allocation figures in excess of a no-op kernel call."""

    peak_bytes: int
    net_bytes: int
    runtime_allocs: int | None  # numba runtime allocations; None for numpy
    n_calls: int

    @property
    def allocation_free(self) -> bool:
        return self.peak_bytes <= 0 and self.net_bytes <= 0 and not self.runtime_allocs


def _nrt_stats():
    try:
        from numba.core.runtime import _nrt_python, rtsys
    except ImportError:  # pragma: no cover
        return None
    _nrt_python.memsys_enable_stats()
    return rtsys


def _steady_state(fns, x, out, n_calls: int, windows: int = 5) -> list[tuple[int, int, int | None]]:
    """Minimum (peak, net, runtime allocs) per function over ``windows`` rounds.

    Each round runs one traced window per function, alternating the order,
    so every function sees the same interpreter state. Reading the tracer
    itself allocates a few ints whose cost depends on freelist state; that
    drifts over time but hits all functions of a round alike. A warm-up
    pass comes first.
    """
    rt = _nrt_stats() if fns[0].__self__.backend == "numba" else None
    gc_was_enabled = gc.isenabled()
    # a collection inside the loop allocates its own bookkeeping
    gc.disable()
    tracemalloc.start()
    stats = [([], [], []) for _ in fns]
    try:
        for fn in fns:
            for _ in itertools.repeat(None, n_calls):
                fn(x, out)
        for w in range(windows):
            order = range(len(fns)) if w % 2 == 0 else reversed(range(len(fns)))
            for i in order:
                fn = fns[i]
                r0 = rt.get_allocation_stats().alloc if rt is not None else 0
                before, _ = tracemalloc.get_traced_memory()
                tracemalloc.reset_peak()
                for _ in itertools.repeat(None, n_calls):
                    fn(x, out)
                current, peak = tracemalloc.get_traced_memory()
                r1 = rt.get_allocation_stats().alloc if rt is not None else 0
                stats[i][0].append(peak - before)
                stats[i][1].append(current - before)
                stats[i][2].append(r1 - r0)
    finally:
        tracemalloc.stop()
        if gc_was_enabled:
            gc.enable()
    return [(min(p), min(n), (min(r) if rt is not None else None)) for p, n, r in stats]


def count_allocations(pred: Predictor, n_calls: int = 1000) -> AllocationReport:
    """Allocation figures for ``n_calls`` of ``predict_into``.

    Calling any kernel from Python costs something: argument tuples, and in
    numba one runtime record per array argument. The same measurement is
    therefore made on a predictor whose kernel is a no-op with the identical
    signature on the same backend, in interleaved windows, and subtracted. Python-heap bytes come
    from tracemalloc with the garbage collector paused; numba runtime
    allocations come from its own counters.
    """
    x = np.zeros(pred.d_in) if pred.standardization is None else pred.standardization.mean.copy()
    out = np.empty(pred.d_out)
    noop = Predictor.__new__(Predictor)  # plain class even if pred is a subclass
    noop.__dict__.update(pred.__dict__)
    noop._kernel = (_kernels.noop_forward_into_nb if pred.backend == "numba"
                    else _kernels.noop_forward_into_np)
    # a throwaway pass absorbs first-measurement effects in the interpreter
    _steady_state([noop.predict_into, pred.predict_into], x, out, min(n_calls, 100), windows=1)
    base, real = _steady_state([noop.predict_into, pred.predict_into], x, out, n_calls, windows=6)
    # the baseline can dip below zero when an unrelated object is freed mid-window
    base = tuple(None if v is None else max(v, 0) for v in base)
    rt = None if real[2] is None else real[2] - base[2]
    return AllocationReport(real[0] - base[0], real[1] - base[1], rt, n_calls)
