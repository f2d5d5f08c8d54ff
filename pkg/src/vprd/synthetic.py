"""Synthetic shots with a known parameter-to-profile map.

Machine parameters are drawn as ``x = nominal + spread * z`` with z standard
normal; the maps act on the normalised vector z = (x - nominal) / spread.

``linear``
    y = A z + b, with A ~ N(0, 0.1^2 / D_in) and b a fixed Gaussian bump.
``bump``
    u = P z with the three rows of P drawn N(0, 1) and scaled to unit norm,
    so each u_i is standard normal. Then over bins k = 0..D-1::

        center    = D/2 + 0.08 * D * tanh(u0)
        width     = D/14 * (1 + 0.35 * tanh(u1))
        amplitude = 1 + 0.5 * tanh(u2)
        y[k]      = amplitude * exp(-0.5 * ((k - center) / width)^2)

Noise is additive N(0, noise_std^2); bump labels are clipped at zero after
adding noise because electron power cannot be negative.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data_model import Dataset, default_parameter_names
from .preprocess import PhaseImage, PreprocessError
from .rng import stream

NOMINAL_CHARGE_PC = 200.0
NOMINAL_ENERGY_MEV = 875.0
TIME_CAL_FS_PER_PX = 1.13
ENERGY_CAL_KEV_PER_PX = 21.0


@dataclass
class SynthConfig:
    n_samples: int = 2826
    d_in: int = 22
    d_out: int = 567
    seed: int = 42
    noise_std: float = 0.01
    jitter_std_px: float = 0.0
    mapping: str = "bump"
    image_rows: int = 48
    time_bin_fs: float = TIME_CAL_FS_PER_PX
    energy_calibration_kev_per_px: float = ENERGY_CAL_KEV_PER_PX

    def validate(self) -> "SynthConfig":
        if self.n_samples < 1 or self.d_in < 1 or self.d_out < 2:
            raise ValueError("n_samples, d_in >= 1 and d_out >= 2 required")
        if self.noise_std < 0 or self.jitter_std_px < 0:
            raise ValueError("noise_std and jitter_std_px must be >= 0")
        if self.mapping not in ("linear", "bump"):
            raise ValueError(f"unknown mapping {self.mapping!r}")
        if self.image_rows < 2:
            raise ValueError("image_rows must be >= 2")
        return self


@dataclass
class GroundTruth:
    mapping: str
    nominal: np.ndarray
    spread: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    P: np.ndarray | None = None
    d_out: int = 0

    def normalise(self, params) -> np.ndarray:
        return (np.asarray(params, dtype=np.float64) - self.nominal) / self.spread

    def labels(self, params) -> np.ndarray:
        """Noiseless labels for raw parameters."""
        z = np.atleast_2d(self.normalise(params))
        if self.mapping == "linear":
            return z @ self.A.T + self.b
        return bump_profiles(z @ self.P.T, self.d_out)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        arrays = {k: (None if d.get(k) is None else np.asarray(d[k], dtype=np.float64))
                  for k in ("nominal", "spread", "A", "b", "P")}
        return cls(mapping=d["mapping"], d_out=int(d["d_out"]), **arrays)


def bump_profiles(u, d_out: int) -> np.ndarray:
    u = np.atleast_2d(u)
    k = np.arange(d_out, dtype=np.float64)
    center = d_out / 2 + 0.08 * d_out * np.tanh(u[:, 0])
    width = d_out / 14 * (1 + 0.35 * np.tanh(u[:, 1]))
    amp = 1 + 0.5 * np.tanh(u[:, 2])
    return amp[:, None] * np.exp(-0.5 * ((k[None, :] - center[:, None]) / width[:, None]) ** 2)


def nominal_parameters(d_in: int) -> tuple[np.ndarray, np.ndarray]:
    """Nominal value and shot-to-shot spread per channel (rough beamline scales)."""
    names = default_parameter_names(d_in)
    nominal = np.ones(d_in)
    spread = np.full(d_in, 0.05)
    for i, name in enumerate(names):
        if name.startswith("norm."):
            nominal[i], spread[i] = 5.0, 0.1
        elif name.startswith("BCM"):
            nominal[i], spread[i] = 1000.0, 20.0
        elif name.startswith("BAM"):
            nominal[i], spread[i] = 0.0, 0.03  # ps, relative arrival time
        elif name.startswith("dt"):
            nominal[i], spread[i] = 0.0, 0.02
        elif name.startswith("CHARGE"):
            nominal[i], spread[i] = NOMINAL_CHARGE_PC, 2.0
        elif name.startswith("ENERGY"):
            nominal[i], spread[i] = NOMINAL_ENERGY_MEV, 0.5
        elif name.startswith("BPM"):
            nominal[i], spread[i] = 0.0, 0.05  # mm
    return nominal, spread


def gen_dataset(cfg: SynthConfig) -> tuple[Dataset, GroundTruth]:
    cfg.validate()
    nominal, spread = nominal_parameters(cfg.d_in)
    z = stream(cfg.seed, "synth_params").standard_normal((cfg.n_samples, cfg.d_in))
    params = nominal + spread * z
    map_rng = stream(cfg.seed, "synth_map")
    gt = GroundTruth(cfg.mapping, nominal, spread, d_out=cfg.d_out)
    if cfg.mapping == "linear":
        gt.A = map_rng.normal(0.0, 0.1 / np.sqrt(cfg.d_in), size=(cfg.d_out, cfg.d_in))
        gt.b = bump_profiles(np.zeros((1, 3)), cfg.d_out)[0]
    else:
        P = map_rng.standard_normal((3, cfg.d_in))
        gt.P = P / np.linalg.norm(P, axis=1, keepdims=True)
    labels = gt.labels(params)
    if cfg.noise_std > 0:
        labels = labels + stream(cfg.seed, "synth_noise").normal(0.0, cfg.noise_std, labels.shape)
    if cfg.mapping == "bump":
        labels = np.maximum(labels, 0.0)
    ds = Dataset(
        params, labels, np.arange(cfg.n_samples), default_parameter_names(cfg.d_in),
        cfg.time_bin_fs, {"source": "synthetic", "mapping": cfg.mapping, "seed": cfg.seed},
    )
    return ds, gt


def energy_axis(rows: int, kev_per_px: float = ENERGY_CAL_KEV_PER_PX) -> np.ndarray:
    """Absolute energy (MeV) per image row, centred on the nominal beam energy."""
    return NOMINAL_ENERGY_MEV + (np.arange(rows) - (rows - 1) / 2) * kev_per_px * 1e-3


def jitter_shifts(cfg: SynthConfig, n: int) -> np.ndarray:
    if cfg.jitter_std_px == 0:
        return np.zeros(n, dtype=np.int64)
    draws = stream(cfg.seed, "synth_jitter").normal(0.0, cfg.jitter_std_px, n)
    return np.rint(draws).astype(np.int64)


def gen_phase_images(cfg: SynthConfig, profiles, shifts=None) -> tuple[list[PhaseImage], np.ndarray]:
    """Expand profiles into phase images whose energy-weighted projection is the profile.

    Each column gets a Gaussian energy distribution g over the rows, scaled by
    profile[c] / sum(g * E); the image is then shifted along time by an
    integer jitter (drawn with ``cfg.jitter_std_px`` unless ``shifts`` is given).
    """
    p = np.atleast_2d(np.asarray(profiles, dtype=np.float64))
    if np.any(p < 0):
        raise ValueError("profiles for phase images must be non-negative")
    rows = cfg.image_rows
    e = energy_axis(rows, cfg.energy_calibration_kev_per_px)
    r = np.arange(rows) - (rows - 1) / 2
    g = np.exp(-0.5 * (r / (rows / 6)) ** 2)
    g_norm = g / (g @ e)
    shifts = jitter_shifts(cfg, p.shape[0]) if shifts is None else np.asarray(shifts, dtype=np.int64)
    if shifts.shape != (p.shape[0],):
        raise ValueError("one shift per profile required")
    images = []
    d = p.shape[1]
    for prof, s in zip(p, shifts):
        s = int(s)
        moved = np.zeros(d)
        if abs(s) < d:
            if s >= 0:
                moved[s:] = prof[:d - s]
            else:
                moved[:d + s] = prof[-s:]
        if prof.any() and not moved.any():
            raise PreprocessError(f"jitter of {s} px pushes the signal out of the {d}-px frame")
        charge = np.outer(g_norm, moved)
        images.append(PhaseImage(charge, e, cfg.time_bin_fs, cfg.energy_calibration_kev_per_px))
    return images, shifts
