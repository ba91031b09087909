import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lossforge import data
from lossforge.errors import ConfigError


def test_longtail_mu_and_endpoints():
    counts, mu = data.longtail_counts([5000] * 10, 100)
    # independent route: bisection on mu**9 = 1/100
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if mid ** 9 > 0.01 else (mid, hi)
    assert mu == pytest.approx(lo, abs=1e-12)
    assert round(mu, 6) == 0.599484
    assert counts[0] == 5000 and counts[-1] == 50
    assert counts[0] / counts[-1] == 100


def test_longtail_rho_one_is_balanced():
    counts, mu = data.longtail_counts([300] * 4, 1.0)
    assert mu == 1.0 and np.all(counts == 300)


def test_longtail_two_classes():
    counts, mu = data.longtail_counts([100, 100], 4)
    assert mu == 0.25 and counts.tolist() == [100, 25]


def test_longtail_empty_class_is_config_error():
    with pytest.raises(ConfigError):
        data.longtail_counts([10] * 10, 1000)


@given(st.integers(2, 12), st.floats(1.0, 200.0), st.integers(200, 3000))
@settings(max_examples=50, deadline=None)
def test_longtail_monotone_and_rho_recovery(K, rho, n):
    try:
        counts, mu = data.longtail_counts([n] * K, rho)
    except ConfigError:
        return
    assert np.all(np.diff(counts) <= 0)
    # rho within rounding: the smallest count may move by one
    exact_last = n / rho
    assert abs(counts[-1] - exact_last) <= 1


def test_make_longtail_meta_and_counts():
    ds = data.make_longtail([200] * 3, 4.0, data.GaussianMixtureSpec(dim=3), seed=1)
    assert ds.class_counts.tolist() == [200, 100, 50]
    assert ds.meta["mu"] == pytest.approx(0.5)


def test_group_cell_sizes_waterbirds_fractions():
    # classes (-, +) by groups (1, 2)
    fr = [[0.012, 0.22], [0.73, 0.038]]
    assert data.cell_sizes(fr, 1000).tolist() == [[12, 220], [730, 38]]


def test_group_cell_sizes_uniform():
    assert data.cell_sizes([[0.25, 0.25], [0.25, 0.25]], 400).tolist() == [[100, 100], [100, 100]]


def test_group_cell_sizes_degenerate():
    with pytest.raises(ConfigError):
        data.cell_sizes([[0.012, 0.22], [0.73, 0.038]], 10)


def test_group_residual_goes_to_largest_cell():
    sizes = data.cell_sizes([[0.333, 0.333], [0.334, 0.0]], 10)
    assert sizes.sum() == 10 and sizes[1, 0] == 4


def test_make_group_dataset_counts():
    ds = data.make_group_dataset([[0.012, 0.22], [0.73, 0.038]], 1000, seed=0)
    assert ds.group_counts.tolist() == [[12, 220], [730, 38]]


def test_split_examples():
    one = data.Dataset(np.zeros((100, 1)), np.zeros(100, dtype=int), 1)
    sp = data.split(one, 0.8, seed=0)
    assert (len(sp.train), len(sp.val)) == (80, 20)
    two = data.Dataset(np.zeros((60, 1)), np.r_[np.zeros(50, int), np.ones(10, int)], 2)
    sp = data.split(two, 0.8, seed=0)
    assert sp.train.class_counts.tolist() == [40, 8]
    assert sp.val.class_counts.tolist() == [10, 2]


def test_split_deterministic_and_partition():
    ds = data.make_longtail([100] * 4, 10, data.GaussianMixtureSpec(dim=4), seed=3)
    a = data.split(ds, 0.8, seed=5)
    b = data.split(ds, 0.8, seed=5)
    assert np.array_equal(a.train_index, b.train_index)
    both = np.sort(np.concatenate([a.train_index, a.val_index]))
    assert np.array_equal(both, np.arange(len(ds)))
    u = a.union()
    assert np.array_equal(u.features, ds.features) and np.array_equal(u.labels, ds.labels)


def test_split_singleton_class_warns():
    ds = data.Dataset(np.zeros((11, 1)), np.r_[np.zeros(10, int), [1]], 2)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sp = data.split(ds, 0.8, seed=0)
    assert any("1 example" in str(w.message) or "single" in str(w.message) for w in caught)
    assert sp.train.class_counts[1] == 1


@given(st.lists(st.integers(2, 80), min_size=1, max_size=5), st.floats(0.05, 0.95))
@settings(max_examples=50, deadline=None)
def test_split_stratification(sizes, fraction):
    labels = np.repeat(np.arange(len(sizes)), sizes)
    ds = data.Dataset(np.zeros((len(labels), 1)), labels, len(sizes))
    sp = data.split(ds, fraction, seed=0)
    for k, c in enumerate(sizes):
        assert abs(sp.val.class_counts[k] - c * (1 - fraction)) <= 1


def test_split_stratifies_by_cell():
    ds = data.make_group_dataset([[0.1, 0.4], [0.3, 0.2]], 200, seed=0)
    sp = data.split(ds, 0.8, seed=0)
    assert np.all(np.abs(sp.val.group_counts - ds.group_counts * 0.2) <= 1)


def test_augment_zero_radius_is_identity(rng):
    x = rng.standard_normal(5)
    out = data.augment(x, 0, data.AugmentPolicy(np.zeros(2), 4), rng)
    assert out.shape == (4, 5) and np.all(out == x)


@given(st.floats(0.0, 5.0), st.integers(1, 8))
@settings(max_examples=30, deadline=None)
def test_augment_ball_membership(eps, d):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(d)
    out = data.augment(x, 1, data.AugmentPolicy([0.0, eps], 50), rng)
    assert np.all(np.linalg.norm(out - x, axis=1) <= eps * (1 + 1e-12))


def test_augment_mean_within_monte_carlo_error():
    rng = np.random.default_rng(7)
    d, eps, m = 3, 2.0, 100_000
    x = np.array([1.0, -2.0, 0.5])
    out = data.augment(x, 0, data.AugmentPolicy([eps], m), rng)
    # per-coordinate variance of the uniform d-ball of radius eps: eps^2 / (d + 2)
    se = math.sqrt(eps**2 / (d + 2) / m)
    assert np.all(np.abs(out.mean(axis=0) - x) <= 3 * se)


def test_augment_policy_validation():
    with pytest.raises(ConfigError):
        data.AugmentPolicy([-0.1])
    with pytest.raises(ConfigError):
        data.AugmentPolicy([0.1], 0)


def test_csv_round_trip_is_bit_exact(tmp_path):
    ds = data.make_group_dataset([[0.1, 0.4], [0.3, 0.2]], 50, seed=2)
    data.save_dataset(ds, tmp_path / "d.csv")
    back = data.load_dataset(tmp_path / "d.csv")
    assert back.features.tobytes() == ds.features.tobytes()
    assert np.array_equal(back.labels, ds.labels) and np.array_equal(back.groups, ds.groups)
    assert back.num_groups == 2
