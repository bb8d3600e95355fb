"""Known-index estimation: the selection-aware log-likelihood surrogate, its
sampled gradient, and projected stochastic gradient ascent.

For a record ``(x, y, j*)`` the per-record objective is

    log f_sigma(y - w_{j*}.x) + log P(competitors land in the slice of j* at y),

and its gradient with respect to ``w_j`` is ``(y - w_{j*}.x) x / sigma^2`` for
the winner and ``(E[z_j] - w_j.x) x / sigma^2`` for a competitor, where ``z``
is the vector of competitor outcomes drawn from ``N(W_{-j*}^T x, sigma^2 I)``
truncated to the slice.  The expectation is replaced by a single draw from
:mod:`selfselect.sampler`.

For ``k = 2`` with the arg-max rule the slice probability is a normal CDF,
which gives a closed-form objective and gradient used as test oracles.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import log_ndtr

from .errors import (EstimatorError, InvalidInputError, SamplerFailureError,
                     SingularDesignError, UnsupportedError)
from .report import EstimationReport
from .rules import RuleKind, SelectionRule
from .sampler import LangevinConfig, sample_slices
from .synthetic import KnownIndexDataset, naive_ols, substream

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

#: PSGD aborts when more than this fraction of steps fail in the sampler
MAX_FAILURE_RATE = 0.01


@dataclass(frozen=True)
class PSGDConfig:
    """``lam=None`` plugs in ``alpha_est / (sigma^2 k)`` with ``alpha_est = k min_j freq_j``.
    ``B=None`` derives the per-column bound from the naive fit (see :func:`psgd_estimate`)."""

    T: int
    lam: Optional[float] = None
    B: Optional[float] = None
    langevin: LangevinConfig = field(default_factory=LangevinConfig)
    seed: int = 0

    def __post_init__(self):
        if self.T < 0:
            raise InvalidInputError("T must be nonnegative")
        if self.lam is not None and not self.lam > 0:
            raise InvalidInputError("lambda must be positive")
        if self.B is not None and not self.B > 0:
            raise InvalidInputError("B must be positive")


@dataclass(frozen=True)
class GradientSample:
    g: np.ndarray  # d x k, column j is the block for w_j
    index: int
    method: str  # "exact", "rejection" or "langevin"


# --------------------------------------------------------------------------
# closed form for k = 2, arg-max
# --------------------------------------------------------------------------


def _require_k2_argmax(W, rule: Optional[SelectionRule]):
    if W.shape[1] != 2:
        raise UnsupportedError("the closed-form objective exists only for k = 2")
    if rule is not None and rule.kind is not RuleKind.ARGMAX:
        raise UnsupportedError("the closed-form objective exists only for the arg-max rule")


def _k2_terms(W, X, y, jstar, sigma):
    Xw = X @ W
    rows = np.arange(X.shape[0])
    resid = y - Xw[rows, jstar]
    alpha = (y - Xw[rows, 1 - jstar]) / sigma
    return resid, alpha


def k2_objective(W, X, y, jstar, sigma: float) -> float:
    """Mean closed-form objective over records ``(X, y, jstar)`` (``jstar`` 0-based)."""
    W = np.asarray(W, dtype=float)
    resid, alpha = _k2_terms(W, X, y, np.asarray(jstar), sigma)
    logpdf = -_HALF_LOG_2PI - math.log(sigma) - 0.5 * (resid / sigma) ** 2
    return float(np.mean(logpdf + log_ndtr(alpha)))


def _mills(alpha):
    """``phi(alpha) / Phi(alpha)``, stable far into the left tail."""
    return np.exp(-0.5 * alpha**2 - _HALF_LOG_2PI - log_ndtr(alpha))


def k2_gradients(W, X, y, jstar, sigma: float) -> np.ndarray:
    """Per-record analytic gradients, shape ``(n, d, 2)``."""
    W = np.asarray(W, dtype=float)
    jstar = np.asarray(jstar)
    resid, alpha = _k2_terms(W, X, y, jstar, sigma)
    n, d = X.shape
    G = np.empty((n, d, 2))
    rows = np.arange(n)
    G[rows, :, jstar] = (resid / sigma**2)[:, None] * X
    G[rows, :, 1 - jstar] = (-_mills(alpha) / sigma)[:, None] * X
    return G


def objective_k2_closed_form(W, dataset: KnownIndexDataset, sigma: Optional[float] = None,
                             rule: Optional[SelectionRule] = None) -> float:
    """Exact objective for two models under the arg-max rule, averaged over the data."""
    W = np.asarray(W, dtype=float)
    _require_k2_argmax(W, rule)
    sigma = dataset.sigma if sigma is None else sigma
    return k2_objective(W, dataset.X, dataset.y, dataset.jstar, sigma)


def gradient_k2_closed_form(W, dataset: KnownIndexDataset, sigma: Optional[float] = None,
                            rule: Optional[SelectionRule] = None) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    _require_k2_argmax(W, rule)
    sigma = dataset.sigma if sigma is None else sigma
    return k2_gradients(W, dataset.X, dataset.y, dataset.jstar, sigma).mean(axis=0)


# --------------------------------------------------------------------------
# sampled gradient
# --------------------------------------------------------------------------


def _others(k: int, j: int) -> np.ndarray:
    return np.array([i for i in range(k) if i != j], dtype=np.int64)


def estimate_gradient(W, record, sigma: float, rule: SelectionRule,
                      langevin_cfg: LangevinConfig, rng=None, index: int = -1) -> GradientSample:
    """One stochastic gradient from ``record = (x, y, jstar)`` (``jstar`` 0-based).

    Sampler failures (empty region, exhausted budget) propagate as
    :class:`~selfselect.errors.EstimatorError` subclasses.
    """
    W = np.asarray(W, dtype=float)
    x, y, j = record
    x = np.asarray(x, dtype=float)
    j = int(j)
    d, k = W.shape
    g = np.empty((d, k))
    g[:, j] = (y - W[:, j] @ x) / sigma**2 * x
    if k == 1:
        return GradientSample(g, index, "exact")
    others = _others(k, j)
    mu = W[:, others].T @ x
    lo, hi = rule.slice_bounds(j, float(y))
    draw = sample_slices(mu[None, :], sigma, lo, hi, langevin_cfg, rng)
    if draw.failed[0]:
        from .errors import InfeasibleRegionError
        raise InfeasibleRegionError(f"slice of record {index} is empty")
    z = draw.z[0]
    g[:, others] = np.outer(x, (z - mu) / sigma**2)
    return GradientSample(g, index, "rejection" if draw.rejection[0] else "langevin")


@dataclass
class GradientBatch:
    G: np.ndarray  # (n, d, k) per-record gradients; rows that failed are zero
    failed: np.ndarray
    rejection: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.G[~self.failed].mean(axis=0)


def estimate_gradients(W, dataset: KnownIndexDataset, rule: SelectionRule,
                       langevin_cfg: LangevinConfig, rng=None) -> GradientBatch:
    """Sampled gradients for every record at a fixed ``W`` (chains run in one batch)."""
    W = np.asarray(W, dtype=float)
    X, y, jstar = dataset.X, dataset.y, dataset.jstar
    sigma = dataset.sigma
    n, d = X.shape
    k = W.shape[1]
    Xw = X @ W
    rows = np.arange(n)
    G = np.zeros((n, d, k))
    G[rows, :, jstar] = ((y - Xw[rows, jstar]) / sigma**2)[:, None] * X
    if k == 1:
        return GradientBatch(G, np.zeros(n, dtype=bool), np.zeros(n, dtype=bool))
    # competitor columns in ascending index order, skipping the winner
    others = np.array([_others(k, j) for j in range(k)])[jstar]
    mu = np.take_along_axis(Xw, others, axis=1)
    lo, hi = rule.slice_bounds_many(jstar, y)
    draw = sample_slices(mu, sigma, lo, hi, langevin_cfg, rng)
    coef = (draw.z - mu) / sigma**2
    coef[draw.failed] = 0.0
    for pos in range(k - 1):
        G[rows, :, others[:, pos]] = coef[:, pos, None] * X
    G[draw.failed] = 0.0
    return GradientBatch(G, draw.failed, draw.rejection)


# --------------------------------------------------------------------------
# projected stochastic gradient ascent
# --------------------------------------------------------------------------


def _project_columns(W, B):
    norms = np.linalg.norm(W, axis=0)
    scale = np.where(norms > B, B / np.where(norms > 0, norms, 1.0), 1.0)
    return W * scale


def default_lambda(dataset: KnownIndexDataset) -> float:
    freq = np.bincount(dataset.jstar, minlength=dataset.k) / dataset.n
    alpha = dataset.k * float(freq.min())
    if alpha <= 0:
        raise EstimatorError("some model is never observed; cannot set the step schedule")
    return alpha / (dataset.sigma**2 * dataset.k)


def default_bound(dataset: KnownIndexDataset) -> float:
    """``2 max_j |w_naive_j| + 1``: generous, data-driven stand-in for the norm bound."""
    try:
        W0 = naive_ols(dataset)
    except SingularDesignError as exc:
        raise InvalidInputError("cannot infer the norm bound B; set it explicitly") from exc
    return 2.0 * float(np.linalg.norm(W0, axis=0).max()) + 1.0


def psgd_estimate(dataset: KnownIndexDataset, rule: SelectionRule, cfg: PSGDConfig,
                  truth=None, callback: Optional[Callable[[int, np.ndarray], None]] = None
                  ) -> EstimationReport:
    """Averaged projected stochastic gradient ascent, one fresh record per step.

    Records are visited without replacement in a seeded random order, so
    ``T <= n`` is required.  Step ``t`` uses ``eta_t = 1 / (lam t)``; each
    column is projected onto the ball of radius ``B``.  The returned estimate
    is the uniform average of ``W^(1..T)``; with ``T = 0`` it is ``W^(0) = 0``.
    """
    start = time.perf_counter()
    if rule.k != dataset.k:
        raise InvalidInputError("rule and dataset disagree on k")
    if cfg.T > dataset.n:
        raise InvalidInputError(f"T={cfg.T} exceeds the {dataset.n} available records")
    sigma = dataset.sigma
    d, k = dataset.d, dataset.k
    lam = cfg.lam if cfg.lam is not None else default_lambda(dataset)
    B = cfg.B if cfg.B is not None else default_bound(dataset)
    order = substream(cfg.seed, "psgd").permutation(dataset.n)[:cfg.T]
    rng = substream(cfg.seed, "sampler")

    W = np.zeros((d, k))
    W_sum = np.zeros((d, k))
    failures = 0
    methods = {"exact": 0, "rejection": 0, "langevin": 0}
    budget = MAX_FAILURE_RATE * cfg.T
    for t, i in enumerate(order, start=1):
        try:
            gs = estimate_gradient(W, (dataset.X[i], dataset.y[i], dataset.jstar[i]),
                                   sigma, rule, cfg.langevin, rng, int(i))
        except EstimatorError as exc:
            failures += 1
            if failures > budget:
                raise SamplerFailureError(
                    f"{failures} of {t} gradient steps failed (limit {MAX_FAILURE_RATE:.0%}); last: {exc}"
                ) from exc
            W_sum += W
            continue
        methods[gs.method] += 1
        W = _project_columns(W + gs.g / (lam * t), B)
        W_sum += W
        if callback is not None:
            callback(t, W)
    W_bar = W_sum / cfg.T if cfg.T else W

    naive = None
    try:
        naive = naive_ols(dataset)
    except SingularDesignError:
        pass
    diagnostics = {
        "T": cfg.T,
        "lambda": lam,
        "B": B,
        "langevin_m": cfg.langevin.m,
        "langevin_gamma": cfg.langevin.step_size(sigma, k),
        "sampler_failures": failures,
        "sampler_rejection": methods["rejection"],
        "sampler_langevin": methods["langevin"],
        "covariate_mode": dataset.covariate_mode,
        "thickness": dataset.thickness(),
    }
    return EstimationReport("psgd", W_bar, None if truth is None else np.asarray(truth, dtype=float),
                            naive, diagnostics, time.perf_counter() - start)


# --------------------------------------------------------------------------
# numerical concavity
# --------------------------------------------------------------------------


def fd_hessian(f: Callable[[np.ndarray], float], w: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Central second differences of a scalar function of a flat vector."""
    w = np.asarray(w, dtype=float)
    p = w.size
    H = np.empty((p, p))
    E = np.eye(p) * h
    f0 = f(w)
    for a in range(p):
        H[a, a] = (f(w + E[a]) - 2 * f0 + f(w - E[a])) / h**2
        for b in range(a + 1, p):
            H[a, b] = H[b, a] = (f(w + E[a] + E[b]) - f(w + E[a] - E[b])
                                 - f(w - E[a] + E[b]) + f(w - E[a] - E[b])) / (4 * h * h)
    return H


@dataclass
class ConcavityReport:
    max_eigenvalues: np.ndarray  # one per W tested
    block_errors: np.ndarray  # max |H_jj - (-(1/sigma^2) mean x x^T)| over j, per W
    tol: float
    block_tol: float

    @property
    def passed(self) -> bool:
        return bool(np.all(self.max_eigenvalues <= self.tol) and np.all(self.block_errors <= self.block_tol))


def numeric_concavity_check(W_list: Sequence, dataset: KnownIndexDataset, sigma: Optional[float] = None,
                            h: float = 1e-3, tol: float = 1e-4, block_tol: float = 1e-3) -> ConcavityReport:
    """Finite-difference Hessians of the closed-form objective at each ``W``.

    The winner block check restricts to records won by ``j``: on those, ``w_j``
    enters only through the Gaussian log-density, whose Hessian is exactly
    ``-(1/sigma^2) x x^T``.
    """
    sigma = dataset.sigma if sigma is None else sigma
    X, y, jstar = dataset.X, dataset.y, dataset.jstar
    d = dataset.d
    eigs, blocks = [], []
    for W in W_list:
        W = np.asarray(W, dtype=float)
        _require_k2_argmax(W, None)

        def f(v, X=X, y=y, jstar=jstar):
            return k2_objective(v.reshape(2, d).T, X, y, jstar, sigma)

        H = fd_hessian(f, W.T.ravel(), h)
        eigs.append(float(np.linalg.eigvalsh(H)[-1]))
        worst = 0.0
        for j in range(2):
            mask = jstar == j
            if not mask.any():
                continue
            Xj, yj, sj = X[mask], y[mask], jstar[mask]

            def fj(v, W=W, j=j, Xj=Xj, yj=yj, sj=sj):
                Wv = W.copy()
                Wv[:, j] = v
                return k2_objective(Wv, Xj, yj, sj, sigma)

            Hj = fd_hessian(fj, W[:, j], h)
            target = -(Xj.T @ Xj) / (Xj.shape[0] * sigma**2)
            worst = max(worst, float(np.abs(Hj - target).max()))
        blocks.append(worst)
    return ConcavityReport(np.array(eigs), np.array(blocks), tol, block_tol)
