"""Sampling ``N(mu, sigma^2 I)`` restricted to a slice region ``C_j(a) ∩ B(R)``.

Two samplers are provided: projected Langevin dynamics (the workhorse when
the region carries little Gaussian mass) and plain rejection sampling (exact,
used as the reference oracle and as the fast path for heavy regions).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import log_ndtr, ndtr

from .errors import InfeasibleRegionError, InvalidInputError, LowMassError
from .kernels import langevin_chains, project_box_ball
from .rules import ConvexRegion, SelectionRule

#: adaptive sampler switches to rejection at or above this box mass
REJECTION_MASS = 0.2
NOISE_BLOCK = 2_000_000


@dataclass(frozen=True)
class LangevinConfig:
    """``gamma=None`` means ``5 k sigma^2 / m`` (capped at ``sigma^2 / 4``), so the
    total diffusion time ``gamma * m`` is ``5 k sigma^2`` whatever ``m`` is;
    ``R=None`` means the mass-aware default radius from :func:`default_radius`."""

    m: int = 10_000
    gamma: Optional[float] = None
    R: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise InvalidInputError("Langevin needs m >= 1")
        if self.gamma is not None and not self.gamma > 0:
            raise InvalidInputError("gamma must be positive")
        if self.R is not None and not self.R > 0:
            raise InvalidInputError("R must be positive")

    def step_size(self, sigma: float, k: int) -> float:
        if self.gamma is not None:
            return self.gamma
        return min(5.0 * k * sigma**2 / self.m, 0.25 * sigma**2)


@dataclass(frozen=True)
class MassEstimate:
    p: float
    se: float
    n: int


def _as_rng(rng) -> np.random.Generator:
    return np.random.default_rng(rng)


def _log_mass_rows(mu, sigma, lo, hi) -> np.ndarray:
    """Row-wise log Gaussian mass of boxes ``[lo, hi]`` (arrays of shape (n, dim))."""
    a = (lo - mu) / sigma
    b = (hi - mu) / sigma
    with np.errstate(divide="ignore", invalid="ignore"):
        upper = log_ndtr(-a)  # lower bound only
        lower = log_ndtr(b)  # upper bound only
        # two-sided: difference of CDFs on the side that keeps precision
        both = np.where(a > 0, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))
        both = np.log(np.maximum(both, 1e-300))
    per = np.where(np.isneginf(a), lower, np.where(np.isposinf(b), upper, both))
    per = np.where(np.isneginf(a) & np.isposinf(b), 0.0, per)
    return per.sum(axis=1)


def box_mass(mu, sigma: float, region: ConvexRegion) -> float:
    """Gaussian mass of the slice box, ignoring the ball (exact, product of 1-d CDFs)."""
    return math.exp(log_box_mass(mu, sigma, region))


def log_box_mass(mu, sigma: float, region: ConvexRegion) -> float:
    mu = np.asarray(mu, dtype=float)
    if region.dim == 0:
        return 0.0
    return float(_log_mass_rows(mu[None, :], sigma, region.lo[None, :], region.hi[None, :])[0])


def _radius_rows(mu, sigma, lo, hi, log_alpha) -> np.ndarray:
    dim = mu.shape[1]
    k = dim + 1
    R = np.linalg.norm(mu, axis=1) + sigma * (math.sqrt(k) + np.sqrt(2.0 * (math.log(2.0) - log_alpha)))
    near = np.clip(np.zeros_like(mu), lo, hi)
    reach = np.linalg.norm(near, axis=1) + sigma * (math.sqrt(max(dim, 1)) + 3.0)
    return np.maximum(R, reach)


def default_radius(mu, sigma: float, rule: SelectionRule, j: int, a: float) -> float:
    """``|mu| + sigma (sqrt(k) + sqrt(2 ln(2/alpha)))`` with ``alpha`` the slice mass.

    Never smaller than the distance from the origin to the slice plus a few
    standard deviations, so the ball always holds the bulk of the target.
    """
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    lo, hi = rule.slice_bounds(j, a)
    lo, hi = lo[None, :], hi[None, :]
    return float(_radius_rows(mu, sigma, lo, hi, _log_mass_rows(mu, sigma, lo, hi))[0])


def truncated_region(rule: SelectionRule, j: int, a: float, mu, sigma: float, R=None) -> ConvexRegion:
    if R is None:
        R = default_radius(mu, sigma, rule, j, a)
    return ConvexRegion(rule, j, float(a), float(R))


def _check_feasible(region: ConvexRegion):
    if region.is_empty:
        raise InfeasibleRegionError(f"slice for winner {region.j} at {region.a!r} is empty within B({region.R!r})")


def _empty_rows(lo, hi, R) -> np.ndarray:
    near = np.clip(np.zeros_like(lo), lo, hi)
    return np.any(hi == -math.inf, axis=1) | np.any(lo > hi, axis=1) | (np.linalg.norm(near, axis=1) > R)


def _run_chains(mu, sigma, lo, hi, R, gamma, m, rng) -> np.ndarray:
    n, dim = mu.shape
    z, _ = project_box_ball(np.zeros((n, dim)), lo, hi, R)
    block = max(1, NOISE_BLOCK // max(n * dim, 1))
    done = 0
    while done < m:
        steps = min(block, m - done)
        langevin_chains(z, mu, gamma, sigma, rng.standard_normal((steps, n, dim)), lo, hi, R)
        done += steps
    return z


def langevin_sample_many(mu, sigma: float, region: ConvexRegion, cfg: LangevinConfig,
                         n_chains: int = 1, rng=None) -> np.ndarray:
    """Run ``n_chains`` independent projected Langevin chains for ``cfg.m`` steps.

    Every chain starts at the projection of the origin.  Returns the final
    states, shape ``(n_chains, k - 1)``.
    """
    _check_feasible(region)
    dim = region.dim
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (dim,):
        raise InvalidInputError(f"mu must have length {dim}")
    if dim == 0:
        return np.empty((n_chains, 0))
    rng = _as_rng(cfg.seed if rng is None else rng)
    gamma = cfg.step_size(sigma, region.rule.k)
    mus = np.repeat(mu[None, :], n_chains, axis=0)
    return _run_chains(mus, sigma, region.lo, region.hi, region.R, gamma, cfg.m, rng)


def langevin_sample(mu, sigma: float, region: ConvexRegion, cfg: LangevinConfig, rng=None) -> np.ndarray:
    return langevin_sample_many(mu, sigma, region, cfg, 1, rng)[0]


def rejection_sample_many(mu, sigma: float, region: ConvexRegion, n: int,
                          max_tries: int = 10_000, rng=None) -> tuple[np.ndarray, int]:
    """Exact draws by rejection.  Returns ``(samples, total_attempts)``.

    Raises :class:`LowMassError` once ``max_tries * n`` attempts are spent.
    """
    _check_feasible(region)
    rng = _as_rng(rng)
    mu = np.asarray(mu, dtype=float)
    dim = region.dim
    if dim == 0:
        return np.empty((n, 0)), n
    out = np.empty((n, dim))
    filled = 0
    tries = 0
    budget = max_tries * n
    batch = max(16, min(n, 1 << 16))
    while filled < n:
        if tries >= budget:
            raise LowMassError(
                f"rejection sampler accepted {filled} of {n} draws in {tries} attempts; "
                "the slice carries too little mass"
            )
        size = min(batch, budget - tries)
        cand = mu + sigma * rng.standard_normal((size, dim))
        ok = (np.all((cand >= region.lo) & (cand <= region.hi), axis=1)
              & (np.einsum("ij,ij->i", cand, cand) <= region.R**2))
        idx = np.flatnonzero(ok)
        take = min(idx.size, n - filled)
        if take < idx.size:
            # attempts beyond the last accepted one needed are not counted
            size = int(idx[take - 1]) + 1 if take else size
        out[filled:filled + take] = cand[idx[:take]]
        filled += take
        tries += size
    return out, tries


def rejection_sample(mu, sigma: float, region: ConvexRegion, max_tries: int = 10_000, rng=None) -> np.ndarray:
    return rejection_sample_many(mu, sigma, region, 1, max_tries, rng)[0][0]


def estimate_region_mass(mu, sigma: float, region: ConvexRegion, n_mc: int = 10_000, rng=None) -> MassEstimate:
    """Monte Carlo estimate of the Gaussian mass of the region, with standard error."""
    if n_mc < 1:
        raise InvalidInputError("n_mc must be at least 1")
    rng = _as_rng(rng)
    mu = np.asarray(mu, dtype=float)
    if region.dim == 0:
        return MassEstimate(1.0, 0.0, n_mc)
    cand = mu + sigma * rng.standard_normal((n_mc, region.dim))
    ok = (np.all((cand >= region.lo) & (cand <= region.hi), axis=1)
          & (np.einsum("ij,ij->i", cand, cand) <= region.R**2))
    p = float(ok.mean())
    return MassEstimate(p, math.sqrt(p * (1 - p) / n_mc), n_mc)


@dataclass
class BatchDraw:
    """Result of :func:`sample_slices`: one draw per row, and how it was made."""

    z: np.ndarray
    rejection: np.ndarray  # bool per row
    failed: np.ndarray  # bool per row (empty region); z is nan there


def sample_slices(mu, sigma: float, lo, hi, cfg: LangevinConfig, rng=None, R=None,
                  max_tries: int = 200) -> BatchDraw:
    """One draw from ``N(mu_i, sigma^2 I)`` restricted to ``[lo_i, hi_i] ∩ B(R_i)`` per row.

    Rows whose box mass is at least :data:`REJECTION_MASS` try rejection
    first (``max_tries`` attempts); every other row, and any row rejection
    gives up on, runs a projected Langevin chain.  Empty regions are flagged
    in ``failed`` rather than raised so batched callers can count them.
    """
    rng = _as_rng(rng)
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    n, dim = mu.shape
    lo = np.ascontiguousarray(np.broadcast_to(lo, mu.shape), dtype=float)
    hi = np.ascontiguousarray(np.broadcast_to(hi, mu.shape), dtype=float)
    z = np.full((n, dim), np.nan)
    rejection = np.zeros(n, dtype=bool)
    if dim == 0:
        return BatchDraw(z, rejection, np.zeros(n, dtype=bool))
    log_alpha = _log_mass_rows(mu, sigma, lo, hi)
    if R is None:
        R = _radius_rows(mu, sigma, lo, hi, log_alpha)
    R = np.ascontiguousarray(np.broadcast_to(np.asarray(R, dtype=float), (n,)))
    failed = _empty_rows(lo, hi, R)

    pending = np.flatnonzero(~failed & (log_alpha >= math.log(REJECTION_MASS)))
    for _ in range(max_tries):
        if pending.size == 0:
            break
        cand = mu[pending] + sigma * rng.standard_normal((pending.size, dim))
        ok = (np.all((cand >= lo[pending]) & (cand <= hi[pending]), axis=1)
              & (np.einsum("ij,ij->i", cand, cand) <= R[pending] ** 2))
        z[pending[ok]] = cand[ok]
        rejection[pending[ok]] = True
        pending = pending[~ok]

    todo = np.flatnonzero(~failed & ~rejection)
    if todo.size:
        gamma = cfg.step_size(sigma, dim + 1)
        z[todo] = _run_chains(np.ascontiguousarray(mu[todo]), sigma, lo[todo], hi[todo], R[todo],
                              gamma, cfg.m, rng)
    return BatchDraw(z, rejection, failed)


def sample_truncated(mu, sigma: float, region: ConvexRegion, cfg: LangevinConfig,
                     rng=None) -> tuple[np.ndarray, str]:
    """One draw, by rejection when the slice mass is at least ``REJECTION_MASS``
    and by projected Langevin otherwise.  Returns ``(z, method)``."""
    _check_feasible(region)
    if region.dim == 0:
        return np.empty(0), "none"
    draw = sample_slices(np.asarray(mu, dtype=float)[None, :], sigma, region.lo, region.hi,
                         cfg, rng, R=region.R)
    return draw.z[0], ("rejection" if draw.rejection[0] else "langevin")
