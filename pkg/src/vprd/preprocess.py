"""Phase images to aligned, cropped electron power profiles.

Pipeline per shot: weight each image row by its energy and sum over rows,
smooth a copy with a Gaussian to locate the power peak, shift every profile
so its peak sits on the median peak, then crop all profiles to the union of
their Otsu foreground plus padding.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels


class PreprocessError(ValueError):
    pass


@dataclass(frozen=True)
class PhaseImage:
    """Charge density, rows along energy and columns along time."""

    charge: np.ndarray
    energy_axis: np.ndarray
    time_calibration_fs_per_px: float = 1.13
    energy_calibration_kev_per_px: float = 21.0

    def __post_init__(self):
        charge = np.asarray(self.charge, dtype=np.float64)
        energy = np.asarray(self.energy_axis, dtype=np.float64)
        if charge.ndim != 2:
            raise PreprocessError("charge must be a 2-D matrix")
        if energy.shape != (charge.shape[0],):
            raise PreprocessError(
                f"energy_axis has {energy.size} entries for {charge.shape[0]} rows"
            )
        if np.any(charge < 0):
            raise PreprocessError("charge density must be non-negative")
        object.__setattr__(self, "charge", charge)
        object.__setattr__(self, "energy_axis", energy)


@dataclass
class AlignmentReport:
    peak_index: np.ndarray
    median_peak: int
    shift: np.ndarray
    crop_window: tuple[int, int] | None = None
    padding: int = 10

    def to_dict(self) -> dict:
        return {
            "peak_index": [int(p) for p in self.peak_index],
            "median_peak": int(self.median_peak),
            "shift": [int(s) for s in self.shift],
            "crop_window": None if self.crop_window is None else list(self.crop_window),
            "padding": int(self.padding),
        }


def energy_weighted_projection(image: PhaseImage) -> np.ndarray:
    """power[c] = sum over rows r of charge[r, c] * energy_axis[r]."""
    if image.charge.size == 0:
        raise PreprocessError("empty phase image")
    return image.energy_axis @ image.charge


def gaussian_kernel(radius_px: int) -> np.ndarray:
    """Discrete Gaussian with sigma = radius_px, cut at 3 sigma, unit sum."""
    if radius_px < 1:
        raise ValueError("smoothing radius must be >= 1 pixel")
    half = int(np.ceil(3 * radius_px))
    k = np.arange(-half, half + 1, dtype=np.float64)
    w = np.exp(-0.5 * (k / radius_px) ** 2)
    return w / w.sum()


def gaussian_smooth(profile, radius_px: int = 10) -> np.ndarray:
    """Gaussian smoothing; edges are mirrored with the edge sample repeated."""
    x = np.ascontiguousarray(profile, dtype=np.float64)
    return _kernels.smooth_reflect(x, gaussian_kernel(radius_px))


def peak_location(profile) -> int:
    """Index of the maximum; the lowest index wins ties."""
    x = np.asarray(profile)
    if x.size == 0:
        raise PreprocessError("empty profile")
    return int(np.argmax(x))


def shift_profile(profile, shift: int) -> np.ndarray:
    """Integer shift with zero fill (positive moves toward higher bins)."""
    x = np.asarray(profile, dtype=np.float64)
    n = x.shape[0]
    if abs(shift) >= n:
        raise PreprocessError(f"shift {shift} moves the whole {n}-bin profile out of frame")
    out = np.zeros_like(x)
    if shift >= 0:
        out[shift:] = x[:n - shift]
    else:
        out[:n + shift] = x[-shift:]
    return out


def lower_median(values) -> int:
    s = np.sort(np.asarray(values))
    return int(s[(len(s) - 1) // 2])


def dejitter(profiles, radius_px: int = 10) -> tuple[np.ndarray, AlignmentReport]:
    """Shift each profile so its smoothed peak lands on the median peak.

    For an even number of profiles the lower of the two middle peaks is used.
    """
    p = np.asarray(profiles, dtype=np.float64)
    if p.ndim == 1:
        p = p[None, :]
    if p.ndim != 2 or p.shape[0] == 0:
        raise PreprocessError("dejitter needs at least one profile of equal length")
    peaks = np.array([peak_location(gaussian_smooth(row, radius_px)) for row in p], dtype=np.int64)
    median = lower_median(peaks)
    shifts = median - peaks
    aligned = np.stack([shift_profile(row, int(s)) for row, s in zip(p, shifts)])
    return aligned, AlignmentReport(peaks, median, shifts)


def _otsu_edges(values: np.ndarray, n_bins: int) -> np.ndarray:
    lo, hi = values.min(), values.max()
    edges = lo + (hi - lo) * (np.arange(n_bins + 1, dtype=np.float64) / n_bins)
    edges[-1] = hi
    return edges


def otsu_threshold(values, n_bins: int = 256) -> float:
    """Otsu's threshold on an ``n_bins`` equal-width histogram over [min, max].

    Candidates are the interior bin edges. Values >= the returned edge form
    the upper class. Class means use the actual sample values falling in each
    bin, not bin centres. Ties go to the lower edge.
    """
    v = np.ascontiguousarray(values, dtype=np.float64).ravel()
    if n_bins < 2:
        raise ValueError("need at least 2 histogram bins")
    if v.size < 2 or v.min() == v.max():
        raise PreprocessError("Otsu threshold needs at least two distinct values")
    edges = _otsu_edges(v, n_bins)
    k = _kernels.otsu_best_edge(v, edges)
    if k < 0:  # pragma: no cover - impossible with two distinct values
        raise PreprocessError("no valid Otsu split")
    return float(edges[k])


def signal_mask(profile, n_bins: int = 256) -> np.ndarray:
    """Boolean foreground mask by Otsu; an all-constant profile has no foreground."""
    v = np.asarray(profile, dtype=np.float64)
    if v.min() == v.max():
        return np.zeros(v.shape, dtype=bool)
    return v >= otsu_threshold(v, n_bins)


def crop_window(profiles, padding_px: int = 10, n_bins: int = 256) -> tuple[int, int]:
    """Inclusive (start, end) covering every profile's foreground, padded and clamped."""
    p = np.atleast_2d(np.asarray(profiles, dtype=np.float64))
    union = np.zeros(p.shape[1], dtype=bool)
    for row in p:
        union |= signal_mask(row, n_bins)
    hits = np.flatnonzero(union)
    if hits.size == 0:
        raise PreprocessError("no profile has any above-threshold bin")
    start = max(0, int(hits[0]) - padding_px)
    end = min(p.shape[1] - 1, int(hits[-1]) + padding_px)
    return start, end


def crop_to_signal(profiles, padding_px: int = 10, n_bins: int = 256,
                   report: AlignmentReport | None = None) -> np.ndarray:
    p = np.atleast_2d(np.asarray(profiles, dtype=np.float64))
    start, end = crop_window(p, padding_px, n_bins)
    if report is not None:
        report.crop_window = (start, end)
        report.padding = padding_px
    return p[:, start:end + 1].copy()


def preprocess_images(images, radius_px: int = 10, padding_px: int = 10,
                      n_bins: int = 256) -> tuple[np.ndarray, AlignmentReport]:
    """Project, de-jitter and crop a batch of phase images."""
    if len(images) == 0:
        raise PreprocessError("no images")
    raw = np.stack([energy_weighted_projection(im) for im in images])
    aligned, report = dejitter(raw, radius_px)
    cropped = crop_to_signal(aligned, padding_px, n_bins, report)
    return cropped, report
