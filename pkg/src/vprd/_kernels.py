"""Hot inner loops, each in two flavours.

Every kernel has a numba ``@njit`` version (``*_nb``) and a pure-numpy
version (``*_np``). The public name points at the numba one unless numba is
missing or ``VPRD_DISABLE_NUMBA`` is set to a truthy value before import.
The two versions accumulate in the same order, so for the smoothing, Otsu
and signed-rank kernels they agree bit for bit; the dense forward pass may
differ in the last ulp because BLAS reorders sums.
"""
from __future__ import annotations

import logging
import os

import numpy as np

logger = logging.getLogger(__name__)

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    _HAVE_NUMBA = False

_DISABLED = os.environ.get("VPRD_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}
USE_NUMBA = _HAVE_NUMBA and not _DISABLED


def _njit(fn):
    if not _HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


# --- gaussian smoothing with half-sample symmetric edges -----------------

@_njit
def _smooth_reflect_nb(x, weights):
    n = x.shape[0]
    r = (weights.shape[0] - 1) // 2
    period = 2 * n
    out = np.empty(n)
    for i in range(n):
        acc = 0.0
        for k in range(weights.shape[0]):
            j = (i + k - r) % period
            if j >= n:
                j = period - 1 - j
            acc += weights[k] * x[j]
        out[i] = acc
    return out


def _smooth_reflect_np(x, weights):
    n = x.shape[0]
    r = (weights.shape[0] - 1) // 2
    padded = np.pad(x, r, mode="symmetric")
    acc = np.zeros(n)
    for k in range(weights.shape[0]):
        acc += weights[k] * padded[k:k + n]
    return acc


# --- Otsu on an explicit-edge histogram -----------------------------------

@_njit
def _otsu_best_edge_nb(values, edges):
    n_bins = edges.shape[0] - 1
    counts = np.zeros(n_bins)
    sums = np.zeros(n_bins)
    for v in values:
        b = np.searchsorted(edges, v, side="right") - 1
        if b > n_bins - 1:
            b = n_bins - 1
        counts[b] += 1.0
        sums[b] += v
    total_n = 0.0
    total_s = 0.0
    for b in range(n_bins):
        total_n += counts[b]
        total_s += sums[b]
    best_k = -1
    best = -1.0
    c0 = 0.0
    s0 = 0.0
    for k in range(1, n_bins):
        c0 += counts[k - 1]
        s0 += sums[k - 1]
        c1 = total_n - c0
        if c0 == 0.0 or c1 == 0.0:
            continue
        w0 = c0 / total_n
        w1 = c1 / total_n
        d = s0 / c0 - (total_s - s0) / c1
        var = w0 * w1 * d * d
        if var > best:
            best = var
            best_k = k
    return best_k


def _otsu_best_edge_np(values, edges):
    n_bins = edges.shape[0] - 1
    b = np.minimum(np.searchsorted(edges, values, side="right") - 1, n_bins - 1)
    counts = np.zeros(n_bins)
    sums = np.zeros(n_bins)
    # np.add.at accumulates in input order, like the loop above
    np.add.at(counts, b, 1.0)
    np.add.at(sums, b, values)
    cum_n = np.cumsum(counts)
    cum_s = np.cumsum(sums)
    total_n = cum_n[-1]
    total_s = cum_s[-1]
    c0 = cum_n[:-1]
    s0 = cum_s[:-1]
    c1 = total_n - c0
    valid = (c0 > 0) & (c1 > 0)
    if not valid.any():
        return -1
    with np.errstate(invalid="ignore", divide="ignore"):
        d = s0 / c0 - (total_s - s0) / c1
        var = (c0 / total_n) * (c1 / total_n) * d * d
    var = np.where(valid, var, -1.0)
    return int(np.argmax(var)) + 1


# --- null distribution of the signed-rank statistic -----------------------

@_njit
def _signed_rank_counts_nb(doubled_ranks):
    total = 0
    for r in doubled_ranks:
        total += r
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    reach = 0
    for r in doubled_ranks:
        for s in range(reach, -1, -1):
            if counts[s] != 0:
                counts[s + r] += counts[s]
        reach += r
    return counts


def _signed_rank_counts_np(doubled_ranks):
    total = int(np.sum(doubled_ranks))
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled_ranks:
        r = int(r)
        shifted = counts[:total + 1 - r].copy()
        counts[r:] += shifted
    return counts


# --- standardize + dense 2-layer forward into preallocated buffers -------
# Weights arrive transposed (w1t is d_in x hidden, w2t is hidden x d_out) so
# the inner loops are contiguous axpy updates that vectorize without
# reassociating any sum.

@_njit
def _dense_relu_forward_into_nb(params, mean, inv_std, z, w1t, b1, w2t, b2, hidden, out):
    n_in, n_h = w1t.shape
    n_out = w2t.shape[1]
    for j in range(n_in):
        z[j] = (params[j] - mean[j]) * inv_std[j]
    for i in range(n_h):
        hidden[i] = b1[i]
    for j in range(n_in):
        zj = z[j]
        for i in range(n_h):
            hidden[i] += w1t[j, i] * zj
    for i in range(n_h):
        if hidden[i] < 0.0:
            hidden[i] = 0.0
    for i in range(n_out):
        out[i] = b2[i]
    for j in range(n_h):
        hj = hidden[j]
        if hj != 0.0:
            for i in range(n_out):
                out[i] += w2t[j, i] * hj


# a Python float operand would be converted to a fresh array on every call
_ZERO = np.zeros(())


def _dense_relu_forward_into_np(params, mean, inv_std, z, w1t, b1, w2t, b2, hidden, out):
    np.subtract(params, mean, z)
    np.multiply(z, inv_std, z)
    np.dot(z, w1t, hidden)
    np.add(hidden, b1, hidden)
    np.maximum(hidden, _ZERO, hidden)
    np.dot(hidden, w2t, out)
    np.add(out, b2, out)


# no-op kernels with the forward pass's signature; used to calibrate the
# allocation harness against the bare cost of calling a kernel

@_njit
def _noop_forward_into_nb(params, mean, inv_std, z, w1t, b1, w2t, b2, hidden, out):
    pass


def _noop_forward_into_np(params, mean, inv_std, z, w1t, b1, w2t, b2, hidden, out):
    pass


smooth_reflect_nb = _smooth_reflect_nb
smooth_reflect_np = _smooth_reflect_np
otsu_best_edge_nb = _otsu_best_edge_nb
otsu_best_edge_np = _otsu_best_edge_np
signed_rank_counts_nb = _signed_rank_counts_nb
signed_rank_counts_np = _signed_rank_counts_np
dense_relu_forward_into_nb = _dense_relu_forward_into_nb
dense_relu_forward_into_np = _dense_relu_forward_into_np
noop_forward_into_nb = _noop_forward_into_nb
noop_forward_into_np = _noop_forward_into_np

if USE_NUMBA:
    smooth_reflect = _smooth_reflect_nb
    otsu_best_edge = _otsu_best_edge_nb
    signed_rank_counts = _signed_rank_counts_nb
    dense_relu_forward_into = _dense_relu_forward_into_nb
else:
    if _DISABLED:
        logger.info("VPRD_DISABLE_NUMBA set; using numpy kernels")
    smooth_reflect = _smooth_reflect_np
    otsu_best_edge = _otsu_best_edge_np
    signed_rank_counts = _signed_rank_counts_np
    dense_relu_forward_into = _dense_relu_forward_into_np
