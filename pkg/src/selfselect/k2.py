"""Unknown-index estimation for two models through the moments of a maximum.

If ``X = max(Z1, Z2)`` for centred Gaussians with variances ``s1 <= s2``
then, whatever their correlation,

    E[X^2] = (s1 + s2) / 2,    E[X^4] = 3 (s1^2 + s2^2) / 2,

so ``s1, s2 = m2 -/+ sqrt(m4/3 - m2^2)``.  For a candidate weight ``w`` the
residual ``y - w.x`` is such a maximum with variances ``|w_i - w|^2 + 1``,
hence the smaller root, minimised over a grid of ``w``, locates a weight.
"""
from __future__ import annotations

import csv
import math
import time
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BudgetExceededError, InconsistentMomentsWarning, InsufficientSamplesError, InvalidInputError
from .kernels import grid_shifted_moments
from .report import EstimationReport
from .spectral import spectral_subspace
from .synthetic import UnknownIndexDataset

MAX_GRID = 1_000_000
MIN_SAMPLES = 100


@dataclass(frozen=True)
class MomentPair:
    m2: float
    m4: float
    se_m2: float
    se_m4: float
    se_disc: float  # delta-method standard error of m4/3 - m2^2
    n: int

    @property
    def discriminant(self) -> float:
        return self.m4 / 3.0 - self.m2**2


def _pairs_from_sums(S: np.ndarray, n: int):
    """Vectorised moments and discriminant SE from sums of r^2, r^4, r^6, r^8."""
    m2, m4, m6, m8 = (S[..., i] / n for i in range(4))
    var2 = np.maximum(m4 - m2**2, 0.0) / n
    var4 = np.maximum(m8 - m4**2, 0.0) / n
    cov = (m6 - m2 * m4) / n
    # d(disc) = dm4 / 3 - 2 m2 dm2
    var_d = var4 / 9.0 + 4.0 * m2**2 * var2 - (4.0 / 3.0) * m2 * cov
    return m2, m4, np.sqrt(var2), np.sqrt(var4), np.sqrt(np.maximum(var_d, 0.0))


def moment_pair(samples) -> MomentPair:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise InvalidInputError("need at least two samples")
    x2 = x * x
    S = np.array([x2.sum(), (x2**2).sum(), (x2**3).sum(), (x2**4).sum()])
    m2, m4, s2, s4, sd = _pairs_from_sums(S, x.size)
    return MomentPair(float(m2), float(m4), float(s2), float(s4), float(sd), x.size)


def invert_moments(m2, m4):
    """``(s_min, s_max) = m2 -/+ sqrt(max(0, m4/3 - m2^2))``, elementwise."""
    root = np.sqrt(np.maximum(np.asarray(m4) / 3.0 - np.asarray(m2) ** 2, 0.0))
    return m2 - root, m2 + root


def min_variance(samples, eps: Optional[float] = None, delta: Optional[float] = None,
                 z: float = 3.0) -> tuple[float, float]:
    """Estimated ``(smaller, larger)`` variance behind samples of ``max(Z1, Z2)``.

    ``samples`` may also be a :class:`MomentPair`.  A discriminant below zero
    by more than ``z`` standard errors triggers :class:`InconsistentMomentsWarning`.
    ``eps``/``delta`` only feed :func:`sample_budget` and are not enforced.
    """
    mp = samples if isinstance(samples, MomentPair) else moment_pair(samples)
    if mp.discriminant < -z * mp.se_disc:
        sigmas = -mp.discriminant / mp.se_disc if mp.se_disc > 0 else math.inf
        warnings.warn(f"discriminant {mp.discriminant:.3g} is {sigmas:.1f} SE below zero",
                      InconsistentMomentsWarning, stacklevel=2)
    lo, hi = invert_moments(mp.m2, mp.m4)
    return float(lo), float(hi)


def sample_budget(sigma2_max: float, eps: float, delta: float) -> float:
    """Chebyshev-style count ``sigma_max^8 / (delta eps^4)`` (constant set to one)."""
    return sigma2_max**4 / (delta * eps**4)


def disk_grid(B: float, pitch: float) -> np.ndarray:
    """Square lattice points of the given pitch inside the disk of radius ``B``."""
    m = int(math.floor(B / pitch))
    if (2 * m + 1) ** 2 > 4 * MAX_GRID:
        raise BudgetExceededError(f"grid at pitch {pitch} over radius {B} is too large")
    ticks = pitch * np.arange(-m, m + 1)
    C = np.stack(np.meshgrid(ticks, ticks, indexing="ij"), axis=-1).reshape(-1, 2)
    C = C[np.einsum("ij,ij->i", C, C) <= B * B + 1e-12]
    if len(C) > MAX_GRID:
        raise BudgetExceededError(f"{len(C)} grid points exceed the cap of {MAX_GRID}")
    return C


@dataclass
class GridSurface:
    C: np.ndarray  # grid points in subspace coordinates
    sigma2_min: np.ndarray
    disc_z: np.ndarray  # discriminant / SE

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["w_coord1", "w_coord2", "sigma2_min"])
            for (a, b), s in zip(self.C, self.sigma2_min):
                w.writerow([f"{a:.17g}", f"{b:.17g}", f"{s:.17g}"])


def surface(XU, y, C, z: float = 3.0) -> GridSurface:
    n = len(y)
    if n < MIN_SAMPLES:
        raise InsufficientSamplesError(f"{n} records; need at least {MIN_SAMPLES}")
    S = grid_shifted_moments(XU, y, C)
    m2, m4, _, _, sd = _pairs_from_sums(S, n)
    disc = m4 / 3.0 - m2**2
    with np.errstate(divide="ignore", invalid="ignore"):
        dz = np.where(sd > 0, disc / sd, 0.0)
    return GridSurface(C, invert_moments(m2, m4)[0], dz)


@dataclass
class K2Result:
    report: EstimationReport
    first: GridSurface  # surface on the part that located w1
    second: GridSurface  # surface on the fresh part that located w2
    coords: np.ndarray  # 2 x 2, columns are the estimates in subspace coordinates


def k2_estimate(dataset: UnknownIndexDataset, U=None, eps: float = 0.2, delta: float = 1.0, B: float = 2.0,
                exclusion: float = 0.75, fail_prob: float = 0.1, splits=(1 / 3, 1 / 3, 1 / 3),
                truth=None) -> K2Result:
    """Two weight vectors from grid minimisation of the smaller variance root.

    ``U=None`` estimates the subspace from the first split; a supplied ``U``
    leaves that split unused.  The first estimate minimises the surface on
    the second split; the second estimate minimises a fresh surface (third
    split) over grid points at least ``exclusion * delta`` from the first.
    """
    start = time.perf_counter()
    if not 0 < eps <= delta / 4:
        raise InvalidInputError("need 0 < eps <= delta / 4")
    if not B > 0:
        raise InvalidInputError("B must be positive")
    part1, part2, part3 = dataset.split(splits)
    spec = None
    if U is None:
        spec = spectral_subspace(part1, 2)
        U = spec.basis
    U = np.asarray(U, dtype=float)
    if U.shape != (dataset.d, 2):
        raise InvalidInputError(f"U must be {dataset.d} x 2")
    C = disk_grid(B, eps / 6.0)

    first = surface(part2.X @ U, part2.y, C)
    i1 = int(np.argmin(first.sigma2_min))
    far = np.linalg.norm(C - C[i1], axis=1) >= exclusion * delta
    if not far.any():
        raise BudgetExceededError("no grid point lies outside the exclusion radius; increase B")
    second = surface(part3.X @ U, part3.y, C[far])
    i2 = int(np.argmin(second.sigma2_min))
    coords = np.column_stack([C[i1], C[far][i2]])
    W_hat = U @ coords

    n_bad = int(np.sum(first.disc_z < -3.0) + np.sum(second.disc_z < -3.0))
    if n_bad:
        warnings.warn(f"{n_bad} grid points have a significantly negative discriminant",
                      InconsistentMomentsWarning, stacklevel=2)
    s_max = float(max(first.sigma2_min.max(), 1.0)) + 4 * B * B
    diagnostics = {
        "eps": eps, "delta": delta, "B": B, "pitch": eps / 6.0, "grid_size": int(len(C)),
        "exclusion_radius": exclusion * delta,
        "sigma2_min_first": float(first.sigma2_min[i1]), "sigma2_min_second": float(second.sigma2_min[i2]),
        "inconsistent_points": n_bad,
        "sample_budget": sample_budget(s_max, eps, fail_prob),
        "split_sizes": [part1.n, part2.n, part3.n],
    }
    if spec is not None:
        diagnostics["spectral_eigenvalues"] = spec.eigenvalues
        diagnostics["spectral_gap"] = spec.gap
    report = EstimationReport("k2-moments", W_hat, None if truth is None else np.asarray(truth, dtype=float),
                              None, diagnostics, time.perf_counter() - start)
    return K2Result(report, first, second, coords)
