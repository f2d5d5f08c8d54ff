import numpy as np
import pytest

from vprd.rng import Xoshiro256StarStar, fisher_yates, splitmix64, stream


def test_xoshiro_reference_vector():
    # state {1, 2, 3, 4}: the first outputs of the reference C implementation
    g = Xoshiro256StarStar(state=[1, 2, 3, 4])
    assert [g.next_u64() for _ in range(2)] == [11520, 0]


def test_xoshiro_matches_independent_implementation():
    # frozen from randomgen's Xoshiro256 (xoshiro256**) with the same raw state
    g = Xoshiro256StarStar(state=[0x0123456789ABCDEF, 0xFEDCBA9876543210, 42, 7])
    assert [g.next_u64() for _ in range(5)] == [
        7378697629483822181,
        18446744073709305079,
        13433329907540747570,
        16392201894970451911,
        16496015462725371685,
    ]


def test_splitmix64_reference():
    # first SplitMix64 output for seed 0
    _, out = splitmix64(0)
    assert out == 0xE220A8397B1DCDAF


def test_zero_state_rejected():
    with pytest.raises(ValueError):
        Xoshiro256StarStar(state=[0, 0, 0, 0])


def test_bounded_in_range_and_roughly_uniform():
    g = Xoshiro256StarStar(7)
    draws = [g.bounded(6) for _ in range(60_000)]
    counts = np.bincount(draws, minlength=6)
    assert counts.min() >= 0 and len(counts) == 6
    assert np.all(np.abs(counts / 10_000 - 1) < 0.05)


def test_fisher_yates_is_permutation_and_seeded():
    p = fisher_yates(100, 3)
    assert sorted(p.tolist()) == list(range(100))
    assert np.array_equal(p, fisher_yates(100, 3))
    assert not np.array_equal(p, fisher_yates(100, 4))


def test_streams_independent_and_reproducible():
    a = stream(1, "dropout").random(5)
    assert np.array_equal(a, stream(1, "dropout").random(5))
    assert not np.array_equal(a, stream(1, "init").random(5))
