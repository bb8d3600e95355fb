import math
import warnings

import numpy as np
import pytest

from selfselect.errors import (BudgetExceededError, InsufficientConditioningError, InvalidInputError,
                               NoCandidateError, OvercountWarning)
from selfselect.grid import (GridConfig, build_net, conditional_moment, disambiguate_signs,
                             double_factorial, extract_candidates, grid_estimate, identifiability_diagnostic,
                             moment_sandwich, moment_scale, prune, select_separated, slab_probability)
from selfselect.synthetic import regenerate_latents, sample_unknown_index


def _random_units(k, n, seed):
    g = np.random.default_rng(seed).standard_normal((n, k))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _covers(coords, gamma, seed=0):
    probe = _random_units(coords.shape[1], 10_000, seed)
    dist = np.min(np.linalg.norm(probe[:, None, :] - coords[None, :, :], axis=2), axis=1)
    return dist.max() <= gamma


def test_double_factorial():
    assert [double_factorial(n) for n in (1, 3, 5, 7)] == [1, 3, 15, 105]


def test_net_one_dimensional():
    U = np.array([[0.6], [0.8]])
    coords, V = build_net(U, 0.1)
    np.testing.assert_allclose(V, [[0.6, 0.8], [-0.6, -0.8]])


@pytest.mark.parametrize("k,gamma", [(2, 0.1), (3, 0.15), (4, 0.6)])
def test_net_covers_and_is_symmetric(k, gamma):
    U = np.linalg.qr(np.random.default_rng(k).standard_normal((6, k)))[0]
    coords, V = build_net(U, gamma, seed=1)
    assert _covers(coords, gamma)
    np.testing.assert_allclose(np.linalg.norm(V, axis=1), 1.0, atol=1e-10)
    for c in coords:
        assert np.min(np.linalg.norm(coords + c, axis=1)) < 1e-9
    if k == 2:
        assert abs(len(coords) - math.ceil(2 * math.pi / gamma)) <= 2


def test_net_floor_and_budget():
    assert len(build_net(np.eye(2), 2.1)[0]) >= 4
    with pytest.raises(BudgetExceededError):
        build_net(np.eye(8)[:, :6], 0.01)


def test_config_validation():
    for bad in ({"l": 3}, {"rho": 0.0}, {"q": 2}, {"sign_rule": "coin"}, {"splits": (0.5, 0.5, 0.0)}):
        with pytest.raises(InvalidInputError):
            GridConfig(**bad)
    assert GridConfig(gamma_net=0.05).radius == pytest.approx(0.15)
    assert GridConfig(delta=0.8).dedup == pytest.approx(0.4)


def test_null_direction_moments():
    ds = sample_unknown_index(np.zeros((2, 1)), 300_000, seed=1)
    U = np.eye(2)[:, :1]
    M2, count = conditional_moment(ds, [1.0, 0.0], cfg=GridConfig(l=2), U=U)
    assert abs(M2 - 1) < 0.1 and count == ds.n
    M4, _ = conditional_moment(ds, [1.0, 0.0], cfg=GridConfig(l=4), U=U)
    assert abs(M4 - 3) < 0.3


def test_single_model_second_moment():
    ds = sample_unknown_index(np.array([[2.0]]), 200_000, seed=2)
    M, _ = conditional_moment(ds, [1.0], cfg=GridConfig(l=2))
    assert abs(M - 5) < 0.2
    scale, clipped = moment_scale([M], 2)
    assert abs(math.sqrt(scale[0] ** 2 - 1) - 2) < 0.1 and not clipped[0]


def test_conditioning_needs_enough_records():
    ds = sample_unknown_index(np.zeros((3, 2)), 2_000, seed=3)
    with pytest.raises(InsufficientConditioningError):
        conditional_moment(ds, [1.0, 0, 0], cfg=GridConfig(rho=0.05), U=np.eye(3)[:, :2])


def test_moment_scale_examples():
    s, c = moment_scale([15.0, 5.0, 7.5], 6)
    assert s[0] == pytest.approx(1.0) and not c[0]
    assert s[2] == 1.0 and c[2]
    s2, _ = moment_scale([5.0], 2)
    assert s2[0] == pytest.approx(math.sqrt(5))
    with pytest.raises(InvalidInputError):
        moment_scale([0.0], 2)


def test_extract_candidates_examples():
    t = np.linspace(0, 2 * np.pi, 40, endpoint=False)
    coords = np.column_stack([np.cos(t), np.sin(t)])
    spike = np.ones(40)
    spike[7] = 2.0
    spike[6] = spike[8] = 1.5
    idx, flat = extract_candidates(coords, spike, 0.3)
    assert 7 in idx and 6 not in idx and 8 not in idx and not flat
    idx, flat = extract_candidates(coords, np.ones(40), 0.3)
    assert len(idx) == 40 and flat


def _signed_setup(sign):
    u = np.array([1.0, 0.0, 0.0])
    ds = sample_unknown_index(sign * 2.0 * u[:, None], 300_000, seed=5)
    return ds.X[:, :1], ds.y


@pytest.mark.parametrize("rule", ["paired", "thresholds"])
def test_sign_for_positive_plant(rule):
    XU, y = _signed_setup(+1)
    d = disambiguate_signs(XU, y, [[1.0]], [math.sqrt(5)], GridConfig(delta=1.0, sign_rule=rule, l=2))[0]
    assert d.sign == 1 and d.shifted_plus <= 2 * 2 - 1 / 8


@pytest.mark.parametrize("rule", ["paired", "thresholds"])
def test_sign_for_negative_plant(rule):
    XU, y = _signed_setup(-1)
    d = disambiguate_signs(XU, y, [[1.0]], [math.sqrt(5)], GridConfig(delta=1.0, sign_rule=rule, l=2))[0]
    assert d.sign == -1
    # shifting by +2 doubles the coefficient: scale sqrt(17), implied magnitude 4
    assert d.shifted_plus == pytest.approx(4.0, abs=0.2)


def test_prune_examples():
    w = np.array([1.0, 0.0])
    reps, ids = prune([w, w + 0.05], [10, 20], 0.25)
    assert len(reps) == 1 and np.allclose(reps[0], w + 0.05)
    reps, _ = prune([w, [0.0, 1.0]], [1, 1], 0.25)
    assert len(reps) == 2
    with pytest.raises(NoCandidateError):
        prune(np.empty((0, 2)), [], 0.25)
    with pytest.warns(OvercountWarning):
        prune([w, -w, [0.0, 1.0]], [1, 1, 1], 0.25, k=2)


def test_select_separated_skips_duplicates():
    reps = np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.5]])
    assert list(select_separated(reps, 2, 0.8)) == [0, 2]
    assert list(select_separated(reps[:2], 2, 0.8)) == [0, 1]


def test_identifiability_diagnostic():
    null = sample_unknown_index(np.zeros((1, 1)), 200_000, seed=6)
    assert all(abs(s - 1) < 0.05 for s in identifiability_diagnostic(null, [1.0], (2, 4, 6)).values())
    ds = sample_unknown_index(np.array([[2.0]]), 200_000, seed=7)
    scales = identifiability_diagnostic(ds, [1.0], (2, 4, 8))
    assert abs(scales[8] - math.sqrt(5)) / math.sqrt(5) < 0.1


def test_slab_probability_matches_simulation():
    z = np.random.default_rng(0).standard_normal((200_000, 2))
    emp = np.mean(np.linalg.norm(z, axis=1) <= 0.5)
    assert slab_probability(3, 0.5) == pytest.approx(emp, abs=0.005)
    assert slab_probability(1, 0.1) == 1.0


def test_small_pipeline_recovers_two_weights(tmp_path):
    W = np.array([[1.5, 0.0], [0.0, 1.2], [0.0, 0.0], [0.0, 0.0]])
    ds = sample_unknown_index(W, 300_000, seed=8)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = grid_estimate(ds, 2, GridConfig(delta=0.8, gamma_net=0.1), truth=W)
    assert res.report.errors().max() < 0.5
    # event probability and sandwich on the scoring split
    n1, n2, _ = res.splits
    assert np.all(res.counts / n2 >= 0.9 * slab_probability(2, 0.3))
    lat = regenerate_latents(W, 1.0, ds.X, 8)[n1:n1 + n2]
    XU2 = ds.X[n1:n1 + n2] @ res.spectral.basis
    assert moment_sandwich(XU2, lat, res.coords, res.M_v, 0.3, 6).passed
    path = tmp_path / "cand.csv"
    res.write_candidates(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "v1,v2,v3,v4,sigma_tilde,M_v,count,sign,cluster"
    assert len(lines) == len(res.candidates) + 1
