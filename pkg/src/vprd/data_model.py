"""Shot-level containers, dataset splitting and input standardization."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import fisher_yates

# Row order of the machine-parameter table. "BPM x, y" is one row there but
# two channels in practice; the 22-input default drops that row.
TABLE1_PARAMETERS = (
    "BCM.1a",
    "norm. BCM.1a",
    "BCM.1b",
    "norm. BCM.1b",
    "BCM.2a",
    "norm. BCM.2a",
    "BCM.2b",
    "norm. BCM.2b",
    "BCM.3a",
    "norm. BCM.3a",
    "BCM.3b",
    "norm. BCM.3b",
    "BAM1-1",
    "BAM1-2",
    "BAM2-1",
    "BAM2-2",
    "BAM3",
    "dt BC1 (BAM1-2 - BAM1-1)",
    "dt BC2 (BAM2-2 - BAM2-1)",
    "CHARGE in Gun",
    "CHARGE in FLASH2",
    "ENERGY in FLASH2",
    "BPM x",
    "BPM y",
)
DEFAULT_D_IN = 22
PAPER_FRACTIONS = (0.8, 0.1, 0.1)


def default_parameter_names(d_in: int = DEFAULT_D_IN) -> list[str]:
    if d_in <= len(TABLE1_PARAMETERS):
        return list(TABLE1_PARAMETERS[:d_in])
    extra = [f"param_{i}" for i in range(len(TABLE1_PARAMETERS), d_in)]
    return list(TABLE1_PARAMETERS) + extra


class DataError(ValueError):
    """Malformed or inconsistent shot data."""


@dataclass(frozen=True)
class Sample:
    params: np.ndarray
    profile: np.ndarray
    shot_index: int


@dataclass(frozen=True)
class Standardization:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise DataError("standardization mean/std must be equal-length vectors")
        if not np.all(self.std > 0):
            raise DataError("standardization std must be positive")

    def __len__(self):
        return self.mean.shape[0]


@dataclass
class Dataset:
    """Shots in acquisition order.

    ``params`` is (n, D_in), ``profiles`` is (n, D); both float64.
    """

    params: np.ndarray
    profiles: np.ndarray
    shot_index: np.ndarray
    param_names: list[str]
    time_bin_fs: float = 1.0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        self.profiles = np.ascontiguousarray(self.profiles, dtype=np.float64)
        self.shot_index = np.asarray(self.shot_index, dtype=np.int64)
        if self.params.ndim != 2 or self.profiles.ndim != 2:
            raise DataError("params and profiles must be 2-D")
        n = self.params.shape[0]
        if self.profiles.shape[0] != n or self.shot_index.shape != (n,):
            raise DataError(
                f"row counts disagree: params {n}, profiles {self.profiles.shape[0]}, "
                f"shot_index {self.shot_index.shape[0]}"
            )
        if len(self.param_names) != self.params.shape[1]:
            raise DataError(
                f"{len(self.param_names)} parameter names for {self.params.shape[1]} columns"
            )
        if n > 1 and not np.all(np.diff(self.shot_index) > 0):
            raise DataError("shot_index must be strictly increasing (acquisition order)")
        bad = ~np.isfinite(self.params)
        if bad.any():
            row, col = np.argwhere(bad)[0]
            raise DataError(f"non-finite value for {self.param_names[col]!r} in row {row}")
        if not np.all(np.isfinite(self.profiles)):
            raise DataError("non-finite profile values")

    def __len__(self):
        return self.params.shape[0]

    def __getitem__(self, i) -> Sample:
        return Sample(self.params[i], self.profiles[i], int(self.shot_index[i]))

    @property
    def d_in(self) -> int:
        return self.params.shape[1]

    @property
    def d_out(self) -> int:
        return self.profiles.shape[1]

    def subset(self, indices) -> "Dataset":
        """Rows at ``indices``, re-sorted into acquisition order."""
        idx = np.sort(np.asarray(indices, dtype=np.int64))
        return Dataset(
            self.params[idx],
            self.profiles[idx],
            self.shot_index[idx],
            list(self.param_names),
            self.time_bin_fs,
            dict(self.provenance),
        )


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)


def split_sizes(n: int, fractions) -> tuple[int, ...]:
    """Largest-remainder apportionment; ties go to the earlier split."""
    raw = [n * f for f in fractions]
    sizes = [math.floor(r) for r in raw]
    remainder = n - sum(sizes)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in order[:remainder]:
        sizes[i] += 1
    return tuple(sizes)


def split_dataset(n: int, fractions=PAPER_FRACTIONS, seed: int = 42) -> SplitIndices:
    """Seeded train/val/test split.

    The permutation comes from :func:`vprd.rng.fisher_yates` (xoshiro256**),
    so it is identical on every platform. Train takes the first block of the
    permutation, then validation, then test.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValueError("need three positive split fractions")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions sum to {sum(fractions)!r}, not 1")
    if n < 3:
        raise ValueError(f"cannot split {n} samples into three non-empty sets")
    sizes = split_sizes(n, fractions)
    if min(sizes) < 1:
        raise ValueError(f"{n} samples with fractions {fractions} leaves an empty split {sizes}")
    perm = fisher_yates(n, seed)
    a, b = sizes[0], sizes[0] + sizes[1]
    parts = [perm[:a].copy(), perm[a:b].copy(), perm[b:].copy()]
    for p in parts:
        p.setflags(write=False)
    return SplitIndices(*parts, seed=int(seed))


def standardize_fit(train_params, names=None) -> Standardization:
    """Per-feature mean and population std (ddof=0) over the training rows."""
    x = np.asarray(train_params, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DataError("standardize_fit needs at least 2 training samples")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    zero = np.flatnonzero(std == 0)
    if zero.size:
        names = names or default_parameter_names(x.shape[1])
        raise DataError(f"zero variance in training data for {names[zero[0]]!r}")
    return Standardization(mean, std)


def standardize_apply(params, st: Standardization) -> np.ndarray:
    x = np.asarray(params, dtype=np.float64)
    if x.shape[-1] != len(st):
        raise DataError(f"expected {len(st)} parameters, got {x.shape[-1]}")
    return (x - st.mean) / st.std


def standardize_invert(z, st: Standardization) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != len(st):
        raise DataError(f"expected {len(st)} parameters, got {z.shape[-1]}")
    return z * st.std + st.mean
