import math

import numpy as np
import pytest

from selfselect.errors import InvalidInputError, UnsupportedError
from selfselect.known_index import (PSGDConfig, default_bound, default_lambda, estimate_gradient,
                                    estimate_gradients, fd_hessian, gradient_k2_closed_form, k2_gradients,
                                    k2_objective, numeric_concavity_check, objective_k2_closed_form,
                                    psgd_estimate)
from selfselect.rules import SelectionRule
from selfselect.sampler import LangevinConfig
from selfselect.synthetic import KnownIndexDataset, naive_ols, random_weights, sample_known_index

ARGMAX2 = SelectionRule.argmax(2)


def _one_record(x, y, j, k=2, sigma=1.0):
    return KnownIndexDataset(np.atleast_2d(x).astype(float), np.array([y], float), np.array([j]), k, sigma, "fixed")


def test_objective_single_record_value():
    ds = _one_record([0.0], 0.0, 0)
    expected = -0.5 * math.log(2 * math.pi) - math.log(2)
    assert objective_k2_closed_form(np.zeros((1, 2)), ds) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(-1.6121, abs=1e-4)


def test_objective_sigma_scaling_golden():
    ds = sample_known_index(np.array([[1.0, -0.5], [0.3, 0.8]]), 1.0, ARGMAX2, n=200, seed=21)
    W = np.array([[0.5, 0.1], [-0.2, 0.4]])
    base = objective_k2_closed_form(W, ds)
    scaled = KnownIndexDataset(ds.X, 2 * ds.y, ds.jstar, 2, 2.0, ds.covariate_mode)
    # rescaling y, W and sigma together only shifts the log-density by -log 2
    assert objective_k2_closed_form(2 * W, scaled) == pytest.approx(base - math.log(2), abs=1e-12)
    assert base == pytest.approx(-2.088701161459765, abs=1e-12)


def test_closed_form_only_for_two_argmax_models():
    ds = _one_record([0.0], 0.0, 0, k=3)
    with pytest.raises(UnsupportedError):
        objective_k2_closed_form(np.zeros((1, 3)), ds)
    with pytest.raises(UnsupportedError):
        gradient_k2_closed_form(np.zeros((1, 2)), _one_record([0.0], 0.0, 0), rule=SelectionRule.argmin(2))


def test_gradient_matches_finite_differences(rng):
    for _ in range(20):
        d = 3
        W = rng.normal(0, 1, (d, 2))
        x = rng.normal(0, 1, (1, d))
        y, j = rng.normal(0, 1.5, 1), rng.integers(0, 2, 1)
        g = k2_gradients(W, x, y, j, 1.3)[0]
        h = 1e-6
        fd = np.empty_like(W)
        for a in range(d):
            for b in range(2):
                E = np.zeros_like(W)
                E[a, b] = h
                fd[a, b] = (k2_objective(W + E, x, y, j, 1.3) - k2_objective(W - E, x, y, j, 1.3)) / (2 * h)
        np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-8)


def test_mills_term_stable_in_far_tail():
    # competitor mean far above y: Phi(alpha) underflows, the gradient must not
    G = k2_gradients(np.array([[0.0, 40.0]]), np.array([[1.0]]), np.array([0.0]), np.array([0]), 1.0)
    assert np.all(np.isfinite(G)) and G[0, 0, 1] == pytest.approx(-40.0, rel=1e-2)


def test_sampled_gradient_mean_matches_closed_form():
    W = np.array([[0.6, -0.4], [0.2, 0.9]])
    ds = sample_known_index(W, 1.0, ARGMAX2, n=3, seed=22)
    exact = gradient_k2_closed_form(np.zeros((2, 2)), ds)
    reps = KnownIndexDataset(np.repeat(ds.X, 20_000, 0), np.repeat(ds.y, 20_000), np.repeat(ds.jstar, 20_000),
                             2, 1.0, "fixed")
    batch = estimate_gradients(np.zeros((2, 2)), reps, ARGMAX2, LangevinConfig(m=2000), rng=0)
    np.testing.assert_allclose(batch.mean, exact, atol=0.03)


def test_single_model_gradient_is_ols_gradient():
    W = np.array([[0.5], [1.0]])
    x, y = np.array([1.0, -2.0]), 0.7
    gs = estimate_gradient(W, (x, y, 0), 0.5, SelectionRule.argmax(1), LangevinConfig())
    np.testing.assert_allclose(gs.g[:, 0], (y - W[:, 0] @ x) / 0.25 * x)
    assert gs.method == "exact"


def test_gradient_envelope(rng):
    B, sigma = 2.0, 1.0
    W = random_weights(4, 3, [B] * 3, seed=3)
    rule = SelectionRule.argmax(3)
    ds = sample_known_index(W, sigma, rule, n=300, seed=23)
    C = ds.covariate_bound()
    batch = estimate_gradients(W, ds, rule, LangevinConfig(m=200), rng=1)
    for i in range(ds.n):
        mu = np.delete(ds.X[i] @ W, ds.jstar[i])
        R = np.linalg.norm(mu) + sigma * (math.sqrt(3) + math.sqrt(2 * math.log(2 / 1e-12)))
        bound = (abs(ds.y[i]) + 3 * B * C + R) * C / sigma**2
        assert np.linalg.norm(batch.G[i]) <= bound


def test_single_model_psgd_matches_ols():
    W = np.array([[1.0], [-0.5]])
    ds = sample_known_index(W, 1.0, SelectionRule.argmax(1), n=10_000, seed=24)
    rep = psgd_estimate(ds, SelectionRule.argmax(1), PSGDConfig(T=10_000, seed=1))
    assert np.linalg.norm(rep.W_hat - naive_ols(ds)) <= 0.05


def test_zero_iterations_return_start():
    ds = sample_known_index(np.eye(2), 1.0, ARGMAX2, n=100, seed=25)
    assert np.array_equal(psgd_estimate(ds, ARGMAX2, PSGDConfig(T=0)).W_hat, np.zeros((2, 2)))
    with pytest.raises(InvalidInputError):
        psgd_estimate(ds, ARGMAX2, PSGDConfig(T=101))


def test_iterates_stay_in_column_balls():
    ds = sample_known_index(np.array([[1.5, -1.0], [0.5, 1.0]]), 1.0, ARGMAX2, n=2000, seed=26)
    norms = []
    psgd_estimate(ds, ARGMAX2, PSGDConfig(T=2000, B=0.8, seed=2),
                  callback=lambda t, W: norms.append(np.linalg.norm(W, axis=0).max()))
    assert len(norms) == 2000 and max(norms) <= 0.8 + 1e-12


def test_defaults_from_data():
    ds = sample_known_index(np.array([[1.0, -1.0]]), 1.0, ARGMAX2, n=10_000, seed=27)
    assert default_lambda(ds) == pytest.approx(np.bincount(ds.jstar).min() / ds.n, rel=1e-12)
    assert default_bound(ds) == pytest.approx(2 * np.linalg.norm(naive_ols(ds), axis=0).max() + 1)


def test_psgd_is_deterministic():
    ds = sample_known_index(np.array([[1.0, -1.0], [0.2, 0.3]]), 1.0, ARGMAX2, n=500, seed=28)
    a = psgd_estimate(ds, ARGMAX2, PSGDConfig(T=500, seed=4, langevin=LangevinConfig(m=200)))
    b = psgd_estimate(ds, ARGMAX2, PSGDConfig(T=500, seed=4, langevin=LangevinConfig(m=200)))
    np.testing.assert_array_equal(a.W_hat, b.W_hat)


def test_fd_hessian_of_quadratic():
    A = np.array([[2.0, 0.5], [0.5, -1.0]])
    np.testing.assert_allclose(fd_hessian(lambda v: 0.5 * v @ A @ v, np.array([0.3, -0.2])), A, atol=1e-6)


def test_concavity_at_truth_and_random_points(rng):
    Wstar = np.array([[1.0, -0.5], [0.3, 0.9]])
    ds = sample_known_index(Wstar, 1.0, ARGMAX2, n=10_000, seed=29)
    pts = [Wstar] + [rng.normal(0, 0.6, (2, 2)) for _ in range(3)]
    report = numeric_concavity_check(pts, ds)
    assert report.passed, (report.max_eigenvalues, report.block_errors)


@pytest.mark.slow
def test_error_decreases_with_iterations():
    W = np.array([[1.0, -1.0], [0.5, 0.5]])
    med = []
    for T in (1_000, 10_000, 100_000):
        errs = []
        for s in range(10):
            ds = sample_known_index(W, 1.0, ARGMAX2, n=100_000, seed=300 + s)
            rep = psgd_estimate(ds, ARGMAX2, PSGDConfig(T=T, B=2.0, seed=s))
            errs.append(np.linalg.norm(rep.W_hat - W, axis=0).max())
        med.append(np.median(errs))
    assert med[0] >= med[1] >= med[2], med
