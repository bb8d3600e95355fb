"""Optimal column matching between an estimate and the ground truth."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidInputError

EXHAUSTIVE_MAX_K = 6


@dataclass(frozen=True)
class Matching:
    """``perm[j]`` is the estimate column matched to truth column ``j`` (``-1`` if none).

    ``errors[j]`` is ``|W_hat[:, perm[j]] - W[:, j]|``, or ``|W[:, j]|`` for an
    unmatched truth column.
    """

    perm: np.ndarray
    errors: np.ndarray

    @property
    def total(self) -> float:
        return float(self.errors.sum())

    @property
    def max(self) -> float:
        return float(self.errors.max()) if self.errors.size else 0.0


def _cost(estimate: np.ndarray, truth: np.ndarray) -> np.ndarray:
    # square cost: padded estimate columns are the zero vector, padded truth columns are free
    ke, kt = estimate.shape[1], truth.shape[1]
    size = max(ke, kt)
    cost = np.zeros((size, size))
    diff = estimate[:, :, None] - truth[:, None, :]
    cost[:ke, :kt] = np.linalg.norm(diff, axis=0)
    cost[ke:, :kt] = np.linalg.norm(truth, axis=0)[None, :]
    return cost


def match_columns(estimate, truth) -> Matching:
    """Minimum-total-error assignment of estimate columns to truth columns.

    Exhaustive over permutations up to :data:`EXHAUSTIVE_MAX_K` columns, the
    Hungarian algorithm beyond.  Unequal column counts are allowed; see
    :class:`Matching` for how unmatched columns are scored.
    """
    estimate = np.atleast_2d(np.asarray(estimate, dtype=float))
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    if estimate.shape[0] != truth.shape[0]:
        raise InvalidInputError("estimate and truth must have the same dimension d")
    ke, kt = estimate.shape[1], truth.shape[1]
    if kt == 0:
        return Matching(np.empty(0, dtype=int), np.empty(0))
    cost = _cost(estimate, truth)
    size = cost.shape[0]
    if size <= EXHAUSTIVE_MAX_K:
        cols = np.arange(size)
        best = min(itertools.permutations(range(size)), key=lambda p: cost[list(p), cols].sum())
        row_for_col = np.array(best)
    else:
        rows, cols = linear_sum_assignment(cost)
        row_for_col = np.empty(size, dtype=int)
        row_for_col[cols] = rows
    perm = row_for_col[:kt].copy()
    errors = cost[perm, np.arange(kt)]
    perm[perm >= ke] = -1
    return Matching(perm, errors)
