"""Ground-truth models, synthetic datasets and the naive per-index OLS baseline.

Randomness comes from named, chunked substreams of one integer seed: chunk
``c`` of stream ``name`` is seeded by ``SeedSequence(seed, spawn_key=(id, c))``.
A dataset is therefore bit-identical for a given seed regardless of how the
chunks are scheduled, and the latent outcomes can be regenerated later to
audit the stored winners.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInputError, SingularDesignError
from .rules import SelectionRule

CHUNK = 1 << 16

STREAMS = {
    "covariates": 1,
    "noise": 2,
    "weights": 3,
    "sampler": 4,
    "psgd": 5,
    "net": 6,
    "splits": 7,
    "mom": 8,
}


def substream(seed: int, name: str, chunk: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[name], int(chunk)))
    return np.random.Generator(np.random.PCG64(ss))


def _chunked_normal(seed: int, name: str, n: int, width: int) -> np.ndarray:
    out = np.empty((n, width))
    for c, start in enumerate(range(0, n, CHUNK)):
        stop = min(n, start + CHUNK)
        out[start:stop] = substream(seed, name, c).standard_normal((stop - start, width))
    return out


def validate_weights(W, B: Optional[float] = None) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise InvalidInputError("weights must be a d x k matrix")
    if not np.all(np.isfinite(W)):
        raise InvalidInputError("weights must be finite")
    if B is not None and np.any(np.linalg.norm(W, axis=0) > B * (1 + 1e-12)):
        raise InvalidInputError(f"a weight column exceeds the norm bound B={B}")
    return W


def random_weights(d: int, k: int, norms=1.0, seed: int = 0, orthogonal: bool = False) -> np.ndarray:
    """Random ``d x k`` weights with prescribed column norms.

    ``orthogonal=True`` draws orthonormal directions (needs ``k <= d``).
    """
    rng = substream(seed, "weights")
    G = rng.standard_normal((d, k))
    if orthogonal:
        if k > d:
            raise InvalidInputError("orthogonal weights need k <= d")
        G, _ = np.linalg.qr(G)
    else:
        G /= np.linalg.norm(G, axis=0)
    return G * np.broadcast_to(np.asarray(norms, dtype=float), (k,))


@dataclass(frozen=True)
class KnownIndexDataset:
    X: np.ndarray
    y: np.ndarray
    jstar: np.ndarray  # 0-based winner index
    k: int
    sigma: float
    covariate_mode: str  # "gaussian" or "fixed"

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def thickness(self) -> float:
        """Smallest eigenvalue of the empirical covariate second moment."""
        return float(np.linalg.eigvalsh(self.X.T @ self.X / self.n)[0])

    def covariate_bound(self) -> float:
        return float(np.max(np.linalg.norm(self.X, axis=1)))

    def subset(self, idx) -> "KnownIndexDataset":
        return KnownIndexDataset(self.X[idx], self.y[idx], self.jstar[idx], self.k, self.sigma, self.covariate_mode)


@dataclass(frozen=True)
class UnknownIndexDataset:
    X: np.ndarray
    y: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "UnknownIndexDataset":
        return UnknownIndexDataset(self.X[idx], self.y[idx])

    def split(self, fractions) -> list["UnknownIndexDataset"]:
        """Contiguous split by fractions (the last part takes the remainder)."""
        cuts = np.floor(np.cumsum(fractions)[:-1] * self.n).astype(int)
        bounds = [0, *cuts.tolist(), self.n]
        return [self.subset(slice(a, b)) for a, b in zip(bounds[:-1], bounds[1:])]


def _covariates(covariates, n: Optional[int], d: int, seed: int) -> tuple[np.ndarray, str]:
    if isinstance(covariates, str):
        if covariates not in ("gaussian", "standard_gaussian"):
            raise InvalidInputError(f"unknown covariate mode {covariates!r}")
        if n is None or n < 1:
            raise InvalidInputError("n must be at least 1")
        return _chunked_normal(seed, "covariates", n, d), "gaussian"
    X = np.asarray(covariates, dtype=float)
    if X.ndim != 2 or X.shape[1] != d:
        raise InvalidInputError(f"fixed design must be an (n, {d}) array")
    if n is not None and n != X.shape[0]:
        raise InvalidInputError("n does not match the fixed design")
    return X.copy(), "fixed"


def regenerate_latents(W, sigma: float, X, seed: int) -> np.ndarray:
    """Latent outcomes ``X W + eps`` exactly as drawn by the samplers below."""
    W = np.asarray(W, dtype=float)
    X = np.asarray(X, dtype=float)
    eps = _chunked_normal(seed, "noise", X.shape[0], W.shape[1])
    return X @ W + sigma * eps


def sample_known_index(W, sigma: float, rule: SelectionRule, covariates="gaussian",
                       n: Optional[int] = None, seed: int = 0) -> KnownIndexDataset:
    W = validate_weights(W)
    if not sigma > 0:
        raise InvalidInputError("sigma must be positive")
    if rule.k != W.shape[1]:
        raise InvalidInputError("rule and weights disagree on k")
    X, mode = _covariates(covariates, n, W.shape[0], seed)
    latents = regenerate_latents(W, sigma, X, seed)
    jstar = rule.select_many(latents)
    y = latents[np.arange(X.shape[0]), jstar]
    return KnownIndexDataset(X, y, jstar, W.shape[1], float(sigma), mode)


def sample_unknown_index(W, n: int, seed: int = 0) -> UnknownIndexDataset:
    W = validate_weights(W)
    X, _ = _covariates("gaussian", n, W.shape[0], seed)
    y = regenerate_latents(W, 1.0, X, seed).max(axis=1)
    return UnknownIndexDataset(X, y)


def naive_ols(dataset: KnownIndexDataset) -> np.ndarray:
    """Per-index least squares, ignoring selection.  Biased by construction."""
    d = dataset.d
    W = np.empty((d, dataset.k))
    for j in range(dataset.k):
        mask = dataset.jstar == j
        Xj = dataset.X[mask]
        if Xj.shape[0] < d or np.linalg.matrix_rank(Xj) < d:
            raise SingularDesignError(f"records won by model {j + 1} do not span R^{d}")
        W[:, j] = np.linalg.lstsq(Xj, dataset.y[mask], rcond=None)[0]
    return W


@dataclass(frozen=True)
class SeparabilityCheck:
    delta: float
    B: float
    passed: bool
    violating_pair: Optional[tuple[int, int]] = None
    norm_violation: Optional[int] = None


def check_separability(W, delta: float, B: float) -> SeparabilityCheck:
    """``|w_i.w_j| / |w_j| + delta <= |w_j|`` for all ``i != j``, and ``max |w_j| <= B``."""
    W = validate_weights(W)
    norms = np.linalg.norm(W, axis=0)
    over = np.flatnonzero(norms > B)
    if over.size:
        return SeparabilityCheck(delta, B, False, norm_violation=int(over[0]))
    G = W.T @ W
    k = W.shape[1]
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            if norms[j] == 0 or abs(G[i, j]) / norms[j] + delta > norms[j]:
                return SeparabilityCheck(delta, B, False, violating_pair=(min(i, j), max(i, j)))
    return SeparabilityCheck(delta, B, True)
