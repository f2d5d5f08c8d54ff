"""Test-set error analysis.

Three per-sample error vectors are compared: the model's prediction, the
training-label mean, and the previous shot ("neighbor"). Significance uses
paired Wilcoxon signed-rank tests with a Bonferroni correction.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels, mlp
from .data_model import Dataset, SplitIndices, Standardization, standardize_apply

EXACT_MAX_N = 20


class WilcoxonError(ValueError):
    """Too few non-zero paired differences for a signed-rank test."""


@dataclass(frozen=True)
class BoxStats:
    median: float
    q1: float
    q3: float
    n: int

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1


@dataclass(frozen=True)
class TestResult:
    statistic: float
    n_effective: int
    p_raw: float
    p_bonferroni: float
    method: str
    w_plus: float = 0.0
    w_minus: float = 0.0

    __test__ = False  # not a pytest class


@dataclass
class ErrorTriple:
    prediction_mse: np.ndarray
    mean_mse: np.ndarray
    neighbor_mse: np.ndarray


def per_sample_mse(predictions, measurements) -> np.ndarray:
    p = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    m = np.atleast_2d(np.asarray(measurements, dtype=np.float64))
    if p.shape != m.shape:
        raise ValueError(f"predictions {p.shape} and measurements {m.shape} differ in shape")
    d = p - m
    return np.mean(d * d, axis=1)


def baseline_mean(measurements, label_mean) -> np.ndarray:
    m = np.atleast_2d(np.asarray(measurements, dtype=np.float64))
    return per_sample_mse(np.broadcast_to(label_mean, m.shape), m)


def baseline_neighbor(measurements) -> np.ndarray:
    """MSE between shot i and shot i+1 (acquisition order); length n-1."""
    m = np.atleast_2d(np.asarray(measurements, dtype=np.float64))
    if m.shape[0] < 2:
        raise ValueError("neighbor baseline needs at least 2 measurements")
    return per_sample_mse(m[1:], m[:-1])


def box_stats(errors) -> BoxStats:
    """Median and quartiles by linear interpolation between order statistics."""
    e = np.asarray(errors, dtype=np.float64).ravel()
    if e.size == 0:
        raise ValueError("box_stats of an empty vector")
    q1, med, q3 = np.percentile(e, [25, 50, 75], method="linear")
    return BoxStats(float(med), float(q1), float(q3), int(e.size))


def average_ranks(values) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    v = np.asarray(values)
    order = np.argsort(v, kind="mergesort")
    sv = v[order]
    ranks = np.empty(v.size, dtype=np.float64)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def bonferroni(p_raw: float, m: int) -> float:
    if m < 1:
        raise ValueError("number of comparisons must be >= 1")
    return min(1.0, m * p_raw)


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def wilcoxon_signed_rank(a, b, *, zero_method: str = "wilcox", method: str = "auto",
                         n_comparisons: int = 1) -> TestResult:
    """Two-sided paired signed-rank test on d = a - b.

    ``zero_method="wilcox"`` drops zero differences before ranking;
    ``"pratt"`` ranks them and then drops them. The exact p-value counts,
    among all 2**n sign assignments of the ranks, those whose W+ lies at
    least as far from its null mean as the observed one; that is done with
    a subset-count recursion over doubled (integer) ranks, so ties are
    handled exactly. ``method="auto"`` uses it up to n = 20 and the normal
    approximation with tie-corrected variance and continuity correction
    beyond.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    d = a - b
    if zero_method == "wilcox":
        d = d[d != 0]
        ranks = average_ranks(np.abs(d))
    elif zero_method == "pratt":
        ranks = average_ranks(np.abs(d))
        keep = d != 0
        d, ranks = d[keep], ranks[keep]
    else:
        raise ValueError(f"unknown zero_method {zero_method!r}")
    n = d.size
    if n < 5:
        raise WilcoxonError(f"only {n} non-zero differences; need at least 5")

    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    stat = min(w_plus, w_minus)

    if method == "auto":
        method = "exact" if n <= EXACT_MAX_N and zero_method == "wilcox" else "normal"
    if method == "exact":
        if n > 60:
            raise ValueError("exact signed-rank distribution limited to n <= 60")
        doubled = np.rint(2 * ranks).astype(np.int64)
        counts = _kernels.signed_rank_counts(doubled)
        total = int(doubled.sum())
        # |2 W+ - total/2|, in doubled units: |2*s - total| with s = doubled W+
        obs = abs(2 * int(doubled[d > 0].sum()) - total)
        s = np.arange(total + 1)
        extreme = int(counts[np.abs(2 * s - total) >= obs].sum())
        p = extreme / 2.0 ** n
        method_name = "exact"
    elif method == "normal":
        mean = n * (n + 1) / 4.0
        if zero_method == "pratt":
            # ranks no longer start at 1; use the empirical null moments
            mean = ranks.sum() / 2.0
            var = float(np.sum(ranks * ranks)) / 4.0
        else:
            _, tie_counts = np.unique(ranks, return_counts=True)
            var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
        if var <= 0:
            p = 1.0
        else:
            z = (abs(w_plus - mean) - 0.5) / math.sqrt(var)
            p = min(1.0, 2.0 * _normal_sf(max(z, 0.0)))
        method_name = "normal-approximation"
    else:
        raise ValueError(f"unknown method {method!r}")
    p = min(1.0, p)
    return TestResult(stat, n, p, bonferroni(p, n_comparisons), method_name, w_plus, w_minus)


# --- end-to-end evaluation ------------------------------------------------

@dataclass
class EvaluationReport:
    errors: ErrorTriple
    prediction: BoxStats
    mean: BoxStats
    neighbor: BoxStats
    vs_mean: TestResult | None
    vs_neighbor: TestResult | None
    vs_neighbor_alt: TestResult | None
    pairing: str
    notes: list

    def to_dict(self) -> dict:
        def test(t):
            return None if t is None else asdict(t)

        return {
            "boxstats": {
                "prediction": asdict(self.prediction),
                "mean": asdict(self.mean),
                "neighbor": asdict(self.neighbor),
            },
            "tests": {
                "prediction_vs_mean": test(self.vs_mean),
                "prediction_vs_neighbor": test(self.vs_neighbor),
                "prediction_vs_neighbor_alt_pairing": test(self.vs_neighbor_alt),
            },
            "neighbor_pairing": self.pairing,
            "n_comparisons": 2,
            "notes": list(self.notes),
        }

    def write_errors_csv(self, path) -> None:
        e = self.errors
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "prediction_mse", "mean_mse", "neighbor_mse"])
            for i in range(len(e.prediction_mse)):
                nb = repr(float(e.neighbor_mse[i])) if i < len(e.neighbor_mse) else ""
                w.writerow([i, repr(float(e.prediction_mse[i])), repr(float(e.mean_mse[i])), nb])


def _paired_test(a, b, label, notes, m):
    try:
        return wilcoxon_signed_rank(a, b, n_comparisons=m)
    except WilcoxonError as exc:
        notes.append(f"{label}: indistinguishable ({exc})")
        return None


def predict_batch(model: mlp.MlpModel, params, standardization: Standardization | None) -> np.ndarray:
    x = params if standardization is None else standardize_apply(params, standardization)
    out, _ = mlp.forward(model, x)
    return out


def evaluate_errors(predictions, measurements, label_mean, pairing: str = "lower",
                    m: int = 2) -> EvaluationReport:
    """Compare predictions against both baselines on measurements in acquisition order.

    ``pairing="lower"`` pairs prediction error i with neighbor pair (i, i+1);
    ``"upper"`` pairs it with pair (i-1, i). The other alignment is also run
    and reported.
    """
    if pairing not in ("lower", "upper"):
        raise ValueError("pairing must be 'lower' or 'upper'")
    pred_err = per_sample_mse(predictions, measurements)
    mean_err = baseline_mean(measurements, label_mean)
    nb_err = baseline_neighbor(measurements)
    notes: list[str] = []

    vs_mean = _paired_test(pred_err, mean_err, "prediction vs mean", notes, m)
    lower = _paired_test(pred_err[:-1], nb_err, "prediction vs neighbor (i, i+1)", notes, m)
    upper = _paired_test(pred_err[1:], nb_err, "prediction vs neighbor (i-1, i)", notes, m)
    primary, alt = (lower, upper) if pairing == "lower" else (upper, lower)
    if primary is not None and alt is not None:
        if (primary.p_bonferroni < 0.01) != (alt.p_bonferroni < 0.01):
            notes.append("neighbor pairings disagree on significance at 0.01")
    return EvaluationReport(
        ErrorTriple(pred_err, mean_err, nb_err),
        box_stats(pred_err), box_stats(mean_err), box_stats(nb_err),
        vs_mean, primary, alt, pairing, notes,
    )


def evaluate(model: mlp.MlpModel, dataset: Dataset, split: SplitIndices, label_mean,
             standardization: Standardization | None = None,
             pairing: str = "lower") -> EvaluationReport:
    test = dataset.subset(split.test)  # acquisition order
    preds = predict_batch(model, test.params, standardization)
    return evaluate_errors(preds, test.profiles, label_mean, pairing)
