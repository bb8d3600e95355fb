import warnings

import numpy as np
import pytest

from selfselect.errors import BudgetExceededError, InconsistentMomentsWarning, InsufficientSamplesError, \
    InvalidInputError
from selfselect.k2 import (disk_grid, invert_moments, k2_estimate, min_variance, moment_pair, sample_budget,
                           surface)
from selfselect.synthetic import sample_unknown_index


def _max_pair(s1, s2, n, rho=0.0, seed=0):
    g = np.random.default_rng(seed).standard_normal((n, 2))
    z1 = g[:, 0]
    z2 = rho * g[:, 0] + np.sqrt(1 - rho**2) * g[:, 1]
    return np.maximum(np.sqrt(s1) * z1, np.sqrt(s2) * z2)


def test_inversion_round_trip(rng):
    s = rng.uniform(0.5, 9, (100, 2))
    m2 = s.mean(axis=1)
    m4 = 1.5 * (s**2).sum(axis=1)
    lo, hi = invert_moments(m2, m4)
    np.testing.assert_allclose(lo, s.min(axis=1), atol=1e-9)
    np.testing.assert_allclose(hi, s.max(axis=1), atol=1e-9)


def test_equal_variances():
    assert invert_moments(1.0, 3.0) == (1.0, 1.0)


def test_monte_carlo_moments_and_inversion():
    x = _max_pair(1.0, 4.0, 1_000_000, seed=1)
    mp = moment_pair(x)
    assert abs(mp.m2 - 2.5) <= 3 * mp.se_m2
    assert abs(mp.m4 - 25.5) <= 3 * mp.se_m4
    lo, hi = min_variance(mp)
    assert lo == pytest.approx(1.0, abs=0.1) and hi == pytest.approx(4.0, abs=0.2)


def test_correlation_does_not_change_output():
    lo, hi = min_variance(_max_pair(1.0, 4.0, 1_000_000, rho=0.5, seed=2))
    assert lo == pytest.approx(1.0, abs=0.1) and hi == pytest.approx(4.0, abs=0.2)


def test_inconsistent_moments_warn():
    # a two-point distribution has m4/3 far below m2^2
    with pytest.warns(InconsistentMomentsWarning):
        lo, hi = min_variance(np.tile([1.0, -1.0], 5000))
    assert lo == hi == 1.0


def test_disk_grid_and_budget():
    C = disk_grid(1.0, 0.5)
    assert len(C) == 13 and np.all(np.linalg.norm(C, axis=1) <= 1 + 1e-12)
    with pytest.raises(BudgetExceededError):
        disk_grid(100.0, 0.001)
    assert sample_budget(2.0, 0.5, 0.1) == pytest.approx(16 / (0.1 * 0.0625))


def test_variance_floor_at_true_weight():
    W = np.array([[1.0, 0.0], [0.0, 1.5], [0.0, 0.0]])
    ds = sample_unknown_index(W, 300_000, seed=3)
    surf = surface(ds.X[:, :2], ds.y, np.array([[1.0, 0.0], [0.5, 0.5]]))
    assert surf.sigma2_min[0] == pytest.approx(1.0, abs=0.1)
    assert surf.sigma2_min[1] > 1.3
    with pytest.raises(InsufficientSamplesError):
        surface(ds.X[:50, :2], ds.y[:50], np.zeros((1, 2)))


def test_landscape_minimum_near_a_true_weight():
    W = np.array([[1.0, 0.0], [0.0, 1.5], [0.0, 0.0]])
    C = disk_grid(2.0, 0.1)
    for seed in range(3):
        ds = sample_unknown_index(W, 200_000, seed=10 + seed)
        surf = surface(ds.X[:, :2], ds.y, C)
        best = C[np.argmin(surf.sigma2_min)]
        assert np.min(np.linalg.norm(W[:2].T - best, axis=1)) <= 0.1 * np.sqrt(2) + 0.05


def test_estimate_recovers_weights_and_writes_surface(tmp_path):
    W = np.zeros((4, 2))
    W[0, 0], W[1, 1] = 1.0, 1.5
    ds = sample_unknown_index(W, 300_000, seed=4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = k2_estimate(ds, eps=0.2, delta=1.0, B=2.0, truth=W)
    assert res.report.errors().max() <= 0.3
    path = tmp_path / "surface.csv"
    res.first.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "w_coord1,w_coord2,sigma2_min" and len(lines) == len(res.first.C) + 1


def test_estimate_argument_checks():
    ds = sample_unknown_index(np.eye(3)[:, :2], 1000, seed=5)
    with pytest.raises(InvalidInputError):
        k2_estimate(ds, eps=0.5, delta=1.0)
    with pytest.raises(InvalidInputError):
        k2_estimate(ds, U=np.eye(3))
