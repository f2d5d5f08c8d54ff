"""Seeded random streams.

Two generators are used:

* ``Xoshiro256StarStar`` drives the dataset split. It is small enough to
  write out here, so the split permutation is fully defined by this file.
  Seeding expands a single integer into the 256-bit state with SplitMix64.
* Bulk draws (weight init, dropout masks, synthetic data) come from numpy's
  PCG64 bit generator, keyed by ``(seed, stream)`` through ``SeedSequence``.
  PCG64 output is platform independent, and each consumer gets its own
  stream so no state is shared.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# stream ids for the bulk generator; never renumber
STREAMS = {
    "init": 1,
    "dropout": 2,
    "synth_params": 3,
    "synth_map": 4,
    "synth_noise": 5,
    "synth_jitter": 6,
    "bench": 7,
}


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a SplitMix64 state; return ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256StarStar:
    """xoshiro256** 1.0 (Blackman and Vigna), pure Python.

    Parameters
    ----------
    seed : int, optional
        Expanded into four state words by successive SplitMix64 outputs.
    state : sequence of 4 ints, optional
        Raw state, for reproducing reference vectors. Must not be all zero.
    """

    def __init__(self, seed: int | None = None, state=None):
        if state is not None:
            s = [int(w) & _MASK64 for w in state]
            if len(s) != 4:
                raise ValueError("xoshiro256** state has exactly 4 words")
        else:
            if seed is None:
                raise ValueError("either seed or state is required")
            sm = int(seed) & _MASK64
            s = []
            for _ in range(4):
                sm, out = splitmix64(sm)
                s.append(out)
        if not any(s):
            raise ValueError("xoshiro256** state must not be all zero")
        self._s = s

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def bounded(self, k: int) -> int:
        """Uniform integer in ``[0, k)`` by Lemire's multiply-shift with rejection."""
        if k <= 0:
            raise ValueError("bound must be positive")
        m = self.next_u64() * k
        low = m & _MASK64
        if low < k:
            threshold = ((1 << 64) - k) % k
            while low < threshold:
                m = self.next_u64() * k
                low = m & _MASK64
        return m >> 64


def fisher_yates(n: int, seed: int) -> np.ndarray:
    """Permutation of ``0..n-1``: for i = n-1 down to 1, swap i with ``bounded(i+1)``."""
    gen = Xoshiro256StarStar(seed)
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = gen.bounded(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return np.asarray(perm, dtype=np.int64)


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent PCG64 generator for a named consumer."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[name],))
    return np.random.Generator(np.random.PCG64(ss))
