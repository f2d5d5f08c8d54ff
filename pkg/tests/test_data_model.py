import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vprd.data_model import (
    DataError, Dataset, Standardization, default_parameter_names, split_dataset, split_sizes,
    standardize_apply, standardize_fit, standardize_invert,
)


def test_paper_split_sizes():
    assert split_dataset(2826, (0.8, 0.1, 0.1), 42).sizes == (2261, 283, 282)


def test_three_samples_one_each():
    for seed in (0, 1, 99):
        assert split_dataset(3, (1 / 3, 1 / 3, 1 / 3), seed).sizes == (1, 1, 1)


def test_split_deterministic():
    a = split_dataset(10, (0.8, 0.1, 0.1), 7)
    b = split_dataset(10, (0.8, 0.1, 0.1), 7)
    for x, y in zip((a.train, a.val, a.test), (b.train, b.val, b.test)):
        assert np.array_equal(x, y)


def test_split_indices_read_only():
    s = split_dataset(10, (0.8, 0.1, 0.1), 7)
    with pytest.raises(ValueError):
        s.train[0] = 5


@settings(max_examples=60, deadline=None)
@given(n=st.integers(3, 400), seed=st.integers(0, 2**32),
       w=st.tuples(st.floats(0.05, 1), st.floats(0.05, 1), st.floats(0.05, 1)))
def test_split_is_bijection(n, seed, w):
    fr = tuple(x / sum(w) for x in w)
    fr = (fr[0], fr[1], 1.0 - fr[0] - fr[1])
    try:
        s = split_dataset(n, fr, seed)
    except ValueError:
        assert min(split_sizes(n, fr)) < 1
        return
    allidx = np.concatenate([s.train, s.val, s.test])
    assert np.array_equal(np.sort(allidx), np.arange(n))


@pytest.mark.parametrize("n, fr", [(2, (0.5, 0.25, 0.25)), (5, (0.9, 0.05, 0.05))])
def test_split_too_small(n, fr):
    with pytest.raises(ValueError):
        split_dataset(n, fr, 0)


def test_split_rejects_bad_fractions():
    with pytest.raises(ValueError):
        split_dataset(100, (0.8, 0.1, 0.2), 0)
    with pytest.raises(ValueError):
        split_dataset(100, (1.0, 0.0, 0.0), 0)


def test_standardize_two_samples_population_std():
    x = np.zeros((2, 3))
    x[1] = [2, 4, 6]
    st_ = standardize_fit(x)
    assert st_.mean[0] == 1 and st_.std[0] == 1


def test_standardize_zero_variance_names_parameter():
    x = np.full((4, 22), 5.0)
    x[:, 1:] += np.arange(4)[:, None]
    with pytest.raises(DataError, match="BCM.1a"):
        standardize_fit(x, default_parameter_names(22))


def test_standardize_apply_examples():
    st_ = Standardization(np.array([1.0]), np.array([2.0]))
    assert standardize_apply([1.0], st_)[0] == 0
    assert standardize_apply([3.0], st_)[0] == 1
    with pytest.raises(DataError):
        standardize_apply([1.0, 2.0], st_)


def test_standardize_roundtrip_and_idempotence(rng):
    x = rng.normal(100, 30, size=(50, 22)) * rng.uniform(0.01, 100, size=22)
    st_ = standardize_fit(x)
    z = standardize_apply(x, st_)
    assert np.allclose(standardize_invert(z, st_), x, rtol=1e-12, atol=1e-12 * np.abs(x).max())
    refit = standardize_fit(z)
    assert np.all(np.abs(refit.mean) < 1e-10)
    assert np.all(np.abs(refit.std - 1) < 1e-10)


def _ds(n=5, d_in=3, d=4):
    return Dataset(np.arange(n * d_in, dtype=float).reshape(n, d_in) ** 1.5,
                   np.ones((n, d)), np.arange(n), default_parameter_names(d_in))


def test_dataset_validation():
    ds = _ds()
    assert len(ds) == 5 and ds.d_in == 3 and ds.d_out == 4
    assert ds[2].shot_index == 2
    with pytest.raises(DataError, match="acquisition order"):
        Dataset(ds.params, ds.profiles, [0, 2, 1, 3, 4], ds.param_names)
    bad = ds.params.copy()
    bad[1, 2] = np.nan
    with pytest.raises(DataError, match="BCM.1b"):
        Dataset(bad, ds.profiles, ds.shot_index, ds.param_names)
    with pytest.raises(DataError):
        Dataset(ds.params, ds.profiles[:4], ds.shot_index, ds.param_names)


def test_subset_keeps_acquisition_order():
    sub = _ds().subset([4, 0, 2])
    assert sub.shot_index.tolist() == [0, 2, 4]


def test_default_names():
    names = default_parameter_names()
    assert len(names) == 22 and names[0] == "BCM.1a" and names[-1] == "ENERGY in FLASH2"
    assert len(default_parameter_names(24))== 24
    assert default_parameter_names(26)[-1] == "param_25"
