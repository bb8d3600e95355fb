"""Weighted second-moment matrix and its top-k eigenspace.

With ``y = max_j (w_j.x + eps_j)`` and standard Gaussian covariates, the
matrix ``M = E[max(0, y)^2 x x^T]`` acts as the scalar ``E[max(0, y)^2]`` on
the orthogonal complement of ``span(w_1..w_k)`` and strictly exceeds it on the
span, so the top-k eigenvectors recover the span.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidInputError
from .synthetic import UnknownIndexDataset, sample_unknown_index


@dataclass(frozen=True)
class SpectralResult:
    eigenvalues: np.ndarray  # all eigenvalues, descending
    basis: np.ndarray  # d x k, orthonormal
    baseline: Optional[float]
    gap: float
    degenerate: bool

    @property
    def k(self) -> int:
        return self.basis.shape[1]


def _xy(data, y=None):
    if isinstance(data, UnknownIndexDataset):
        return data.X, data.y
    return np.asarray(data, dtype=float), np.asarray(y, dtype=float)


def weighted_second_moment(data, y=None) -> np.ndarray:
    """``(1/n) sum max(0, y)^2 x x^T`` over a dataset (or arrays ``X, y``)."""
    X, y = _xy(data, y)
    if X.shape[0] < 1:
        raise InvalidInputError("need at least one record")
    w = np.maximum(y, 0.0) ** 2
    M = (X * w[:, None]).T @ X / X.shape[0]
    return 0.5 * (M + M.T)


def baseline_moment(data, y=None) -> tuple[float, float]:
    """``E[max(0, y)^2]`` estimate and its standard error."""
    _, y = _xy(data, y)
    w = np.maximum(y, 0.0) ** 2
    return float(w.mean()), float(w.std(ddof=1) / math.sqrt(w.size)) if w.size > 1 else math.inf


def top_k_subspace(M, k: int, baseline: Optional[float] = None, rel_tol: float = 1e-12) -> SpectralResult:
    """Exact symmetric eigendecomposition; keeps the ``k`` leading eigenvectors.

    ``gap`` is ``lambda_k - lambda_{k+1}``, or ``lambda_k - baseline`` when
    ``k = d`` and a baseline is given.  ``degenerate`` flags a gap that is
    zero up to ``rel_tol`` relative to the largest eigenvalue.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputError("M must be square")
    d = M.shape[0]
    if not 1 <= k <= d:
        raise InvalidInputError(f"k={k} must be between 1 and d={d}")
    vals, vecs = np.linalg.eigh(0.5 * (M + M.T))
    vals, vecs = vals[::-1], vecs[:, ::-1]
    if k < d:
        gap = float(vals[k - 1] - vals[k])
    elif baseline is not None:
        gap = float(vals[k - 1] - baseline)
    else:
        gap = float(vals[k - 1])
    scale = max(1.0, abs(float(vals[0])))
    return SpectralResult(vals, np.ascontiguousarray(vecs[:, :k]), baseline, gap, gap <= rel_tol * scale)


def spectral_subspace(dataset: UnknownIndexDataset, k: int) -> SpectralResult:
    M = weighted_second_moment(dataset)
    return top_k_subspace(M, k, baseline_moment(dataset)[0])


def subspace_angle(U, W) -> float:
    """``max_j |w_j - P_U w_j| / |w_j|`` over nonzero columns of ``W``."""
    U = np.asarray(U, dtype=float)
    W = np.asarray(W, dtype=float)
    norms = np.linalg.norm(W, axis=0)
    keep = norms > 0
    if not keep.any():
        return 0.0
    Wk = W[:, keep]
    resid = Wk - U @ (U.T @ Wk)
    return float(np.max(np.linalg.norm(resid, axis=0) / norms[keep]))


def gap_heuristic_k(eigenvalues, k_max: Optional[int] = None) -> int:
    """Index of the largest relative eigen-gap ``(l_i - l_{i+1}) / l_i`` (1-based count)."""
    vals = np.asarray(eigenvalues, dtype=float)
    k_max = len(vals) - 1 if k_max is None else min(k_max, len(vals) - 1)
    if k_max < 1:
        return 1
    head = vals[:k_max]
    rel = (head - vals[1:k_max + 1]) / np.where(head > 0, head, np.inf)
    return int(np.argmax(rel)) + 1


@dataclass(frozen=True)
class RayleighTest:
    quotient: float  # v^T M v
    baseline: float
    excess: float  # quotient - baseline, from paired differences
    se: float

    @property
    def z(self) -> float:
        return self.excess / self.se if self.se > 0 else math.inf


def rayleigh_test(data, v, y=None) -> RayleighTest:
    """Compare ``v^T M v`` with ``E[max(0, y)^2]`` through the paired per-record
    differences ``max(0, y)^2 ((v.x)^2 - 1)``; ``v`` is normalised first."""
    X, y = _xy(data, y)
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    w = np.maximum(y, 0.0) ** 2
    proj2 = (X @ v) ** 2
    diff = w * (proj2 - 1.0)
    n = w.size
    return RayleighTest(float(np.mean(w * proj2)), float(w.mean()), float(diff.mean()),
                        float(diff.std(ddof=1) / math.sqrt(n)))


@dataclass(frozen=True)
class ConcentrationProbe:
    n_grid: np.ndarray
    deviations: np.ndarray  # len(seeds) x len(n_grid), operator norm
    slope: float  # log-log slope of the median deviation against n

    def rows(self):
        for s in range(self.deviations.shape[0]):
            for i, n in enumerate(self.n_grid):
                yield int(n), s, float(self.deviations[s, i])


def concentration_probe(W, n_grid: Sequence[int] = (1_000, 10_000, 100_000),
                        seeds: Sequence[int] = tuple(range(10)), reference_factor: int = 10) -> ConcentrationProbe:
    """``|M_n - M_ref|_2`` against ``n`` for nested prefixes of one sample per seed.

    The reference is an independent sample of ``reference_factor * max(n)``
    records.  The fitted slope should sit near ``-1/2``.
    """
    W = np.asarray(W, dtype=float)
    n_grid = np.asarray(sorted(n_grid), dtype=int)
    n_max = int(n_grid[-1])
    dev = np.empty((len(seeds), len(n_grid)))
    for s_idx, seed in enumerate(seeds):
        # two disjoint seeds per probe seed: even for the sample, odd for the reference
        data = sample_unknown_index(W, n_max, seed=2 * int(seed))
        ref = sample_unknown_index(W, reference_factor * n_max, seed=2 * int(seed) + 1)
        M_ref = weighted_second_moment(ref)
        for i, n in enumerate(n_grid):
            M_n = weighted_second_moment(data.subset(slice(0, int(n))))
            dev[s_idx, i] = np.linalg.norm(M_n - M_ref, 2)
    med = np.median(dev, axis=0)
    slope = float(np.polyfit(np.log(n_grid), np.log(med), 1)[0])
    return ConcentrationProbe(n_grid, dev, slope)
