"""Unknown-index estimation for general k over a net of directions.

Pipeline, on three disjoint parts of the data:

1. the top-k eigenspace ``U`` of the weighted second-moment matrix (part 1);
2. for each net direction ``v`` in ``U``, the median-of-means estimate ``M_v``
   of ``E[y^l | A_v]``, where the slab event ``A_v`` keeps records whose
   covariate, projected onto ``U``, lies within ``rho`` of the line through
   ``v`` (part 2).  The scale ``(M_v / (l-1)!!)^(1/l)`` is largest along the
   weight directions;
3. local maxima of the scale are candidates; each gets a sign from a shifted
   moment measured on part 3, and nearby signed estimates are merged.
"""
from __future__ import annotations

import csv
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import gammainc
from scipy.stats import special_ortho_group

from .errors import (AmbiguousSignWarning, BudgetExceededError, InsufficientConditioningError,
                     InvalidInputError, NoCandidateError, OvercountWarning)
from .kernels import slab_block_moments
from .report import EstimationReport
from .spectral import SpectralResult, spectral_subspace
from .synthetic import UnknownIndexDataset, substream

MAX_NET = 1_000_000
MIN_PER_BLOCK = 10


def double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1


@dataclass(frozen=True)
class GridConfig:
    """Defaults are desk-scale choices; every one of them is exposed.

    ``neighborhood=None`` means ``3 * gamma_net``; ``dedup_radius=None`` means
    ``delta / 2``.  ``sign_rule`` is ``"paired"`` (compare the moment shifted
    by ``+s`` against the one shifted by ``-s``) or ``"thresholds"`` (compare
    the ``+s`` shifted scale with ``2s - delta/8`` and ``2s - delta/16``).
    """

    l: int = 6
    rho: float = 0.3
    gamma_net: float = 0.05
    q: int = 32
    delta: float = 0.5
    B: Optional[float] = None
    neighborhood: Optional[float] = None
    dedup_radius: Optional[float] = None
    sign_rule: str = "paired"
    splits: tuple = (1 / 3, 1 / 3, 1 / 3)
    seed: int = 0

    def __post_init__(self):
        if self.l < 2 or self.l % 2:
            raise InvalidInputError("moment order l must be even and at least 2")
        if not 0 < self.rho <= 1:
            raise InvalidInputError("rho must lie in (0, 1]")
        if not self.gamma_net > 0:
            raise InvalidInputError("gamma_net must be positive")
        if self.q < 3:
            raise InvalidInputError("q must be at least 3")
        if not self.delta > 0:
            raise InvalidInputError("delta must be positive")
        if self.sign_rule not in ("paired", "thresholds"):
            raise InvalidInputError(f"unknown sign rule {self.sign_rule!r}")
        if len(self.splits) != 3 or abs(sum(self.splits) - 1) > 1e-9 or min(self.splits) <= 0:
            raise InvalidInputError("splits must be three positive fractions summing to one")

    @property
    def radius(self) -> float:
        return 3 * self.gamma_net if self.neighborhood is None else self.neighborhood

    @property
    def dedup(self) -> float:
        return self.delta / 2 if self.dedup_radius is None else self.dedup_radius


@dataclass(frozen=True)
class NetPoint:
    v: np.ndarray  # ambient unit vector
    sigma_tilde: float
    M_v: float
    count: int
    clipped: bool


# --------------------------------------------------------------------------
# nets on the unit sphere of U (coordinates relative to the basis of U)
# --------------------------------------------------------------------------


def _circle(gamma: float) -> np.ndarray:
    N = max(4, math.ceil(2 * math.pi / gamma))
    N += N % 2
    t = 2 * math.pi * np.arange(N) / N
    return np.column_stack([np.cos(t), np.sin(t)])


def _sphere(gamma: float) -> np.ndarray:
    n_rings = max(2, math.ceil(math.pi / gamma))
    upper = []
    for i in range(n_rings // 2):
        phi = (i + 0.5) * math.pi / n_rings
        m = max(1, math.ceil(2 * math.pi * math.sin(phi) / gamma))
        t = 2 * math.pi * (np.arange(m) + 0.5 * (i % 2)) / m
        upper.append(np.column_stack([math.sin(phi) * np.cos(t), math.sin(phi) * np.sin(t),
                                      np.full(m, math.cos(phi))]))
    pts = [np.vstack(upper), -np.vstack(upper)]
    if n_rings % 2:
        m = max(4, math.ceil(2 * math.pi / gamma))
        m += m % 2
        t = 2 * math.pi * np.arange(m) / m
        pts.append(np.column_stack([np.cos(t), np.sin(t), np.zeros(m)]))
    return np.vstack(pts)


def net_size_estimate(k: int, gamma: float) -> float:
    """Rough point count of a ``gamma``-net of the unit sphere in ``R^k``."""
    if k == 1:
        return 2.0
    area = 2 * math.pi ** (k / 2) / math.gamma(k / 2)
    cap = math.pi ** ((k - 1) / 2) / math.gamma((k + 1) / 2) * (gamma / 2) ** (k - 1)
    return area / cap


def _greedy(k: int, gamma: float, rng) -> np.ndarray:
    """Greedy antipodal cover from random candidates, then refinement rounds:
    fresh random probes left uncovered are added until a full round finds none."""
    est = net_size_estimate(k, gamma)
    n_cand = int(min(20 * est, 4 * MAX_NET))
    rot = special_ortho_group.rvs(k, random_state=rng)
    chosen = np.empty((0, k))
    for _ in range(64):
        cand = rng.standard_normal((n_cand, k))
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        cand = cand @ rot
        if len(chosen):
            dist, _ = cKDTree(chosen).query(cand, distance_upper_bound=gamma)
            cand = cand[~np.isfinite(dist)]
        if len(cand) == 0:
            return chosen
        added: list[np.ndarray] = []
        tree = None
        for c in cand:
            # keep a small buffer in brute force, rebuild the tree as it grows
            if tree is not None and tree.query_ball_point(c, gamma, return_length=True) > 0:
                continue
            if added and np.min(np.linalg.norm(np.asarray(added[-512:]) - c, axis=1)) <= gamma:
                continue
            added.extend([c, -c])
            if len(added) % 512 == 0:
                tree = cKDTree(np.asarray(added))
            if len(chosen) + len(added) > MAX_NET:
                raise BudgetExceededError(f"net for k={k} at resolution {gamma} exceeds {MAX_NET} points")
        chosen = np.vstack([chosen, np.asarray(added)])
    return chosen


def build_net(U, gamma_net: float, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Directions covering the unit sphere of ``span(U)`` to resolution ``gamma_net``.

    Returns ``(coords, V)``: coordinates relative to ``U`` (N x k) and the
    ambient unit vectors ``V = coords @ U.T`` (N x d).  The net is closed
    under ``v -> -v``.
    """
    U = np.asarray(U, dtype=float)
    k = U.shape[1]
    if not gamma_net > 0:
        raise InvalidInputError("gamma_net must be positive")
    if k == 1:
        coords = np.array([[1.0], [-1.0]])
    elif k == 2:
        coords = _circle(gamma_net)
    elif k == 3:
        coords = _sphere(gamma_net)
    else:
        if net_size_estimate(k, gamma_net) > MAX_NET:
            raise BudgetExceededError(f"net for k={k} at resolution {gamma_net} exceeds {MAX_NET} points")
        coords = _greedy(k, gamma_net, substream(seed, "net"))
    return coords, coords @ U.T


# --------------------------------------------------------------------------
# conditional moments
# --------------------------------------------------------------------------


def _median_of_means(sums, counts, q_min_total):
    total = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    M = np.nanmedian(means, axis=1) if means.size else np.empty(0)
    M = np.where(total >= q_min_total, M, np.nan)
    return M, total


def slab_moments(XU, y, coords, shifts, rho: float, l: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Median-of-means ``E[(y - shift v.x)^l | A_v]`` for each row of ``coords``.

    Directions with fewer than ``10 q`` records in the slab get ``nan``.
    """
    sums, counts = slab_block_moments(XU, y, coords, shifts, rho, l, q)
    return _median_of_means(sums, counts, MIN_PER_BLOCK * q)


def conditional_moment(dataset: UnknownIndexDataset, v, shift: Optional[float] = None,
                       cfg: GridConfig = GridConfig(), U=None) -> tuple[float, int]:
    """``(M_v, count)`` for one direction.  ``U=None`` uses ``span(v)``, i.e. no conditioning."""
    v = np.asarray(v, dtype=float)
    U = v[:, None] / np.linalg.norm(v) if U is None else np.asarray(U, dtype=float)
    XU = dataset.X @ U
    c = U.T @ v
    c = c / np.linalg.norm(c)
    M, count = slab_moments(XU, dataset.y, c[None, :], [0.0 if shift is None else shift],
                            cfg.rho, cfg.l, cfg.q)
    if not np.isfinite(M[0]):
        raise InsufficientConditioningError(
            f"only {int(count[0])} records in the slab; need at least {MIN_PER_BLOCK * cfg.q}")
    return float(M[0]), int(count[0])


def moment_scale(M_v, l: int) -> tuple[np.ndarray, np.ndarray]:
    """``((M_v / (l-1)!!)^(1/l), clipped)`` with the scale floored at one."""
    M = np.asarray(M_v, dtype=float)
    if np.any(~(M > 0)):
        raise InvalidInputError("moment estimates must be positive")
    raw = (M / double_factorial(l - 1)) ** (1.0 / l)
    clipped = raw < 1.0
    return np.maximum(raw, 1.0), clipped


# --------------------------------------------------------------------------
# candidates, signs, pruning
# --------------------------------------------------------------------------


def extract_candidates(coords, sigma_tilde, radius: float) -> tuple[np.ndarray, bool]:
    """Indices of net points whose scale is maximal within ``radius``; ties are kept.

    Also returns a flag that is ``True`` when every point qualifies (flat scores).
    """
    coords = np.asarray(coords, dtype=float)
    s = np.asarray(sigma_tilde, dtype=float)
    tree = cKDTree(coords)
    keep = []
    for i, nbrs in enumerate(tree.query_ball_point(coords, radius)):
        if s[i] >= np.max(s[nbrs]):
            keep.append(i)
    keep = np.asarray(keep, dtype=int)
    if keep.size == 0:
        raise NoCandidateError("no local maximum among the net scores")
    return keep, keep.size == len(s)


@dataclass(frozen=True)
class SignDecision:
    sign: int  # +1, -1, or 0 for ambiguous
    s: float  # magnitude sqrt(sigma_tilde^2 - 1)
    shifted_plus: float  # shifted scale with shift +s
    shifted_minus: float  # shifted scale with shift -s (nan under the threshold rule)


def _shifted_scale(M, l):
    with np.errstate(invalid="ignore"):
        base = (M / double_factorial(l - 1)) ** (2.0 / l) - 1.0
    return np.sqrt(np.maximum(base, 0.0))


def disambiguate_signs(XU, y, coords, sigma_tilde, cfg: GridConfig) -> list[SignDecision]:
    """Sign of each candidate from moments of the shifted response on fresh data.

    ``XU``/``y`` must come from a split not used to score the net.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    s = np.sqrt(np.maximum(np.asarray(sigma_tilde, dtype=float) ** 2 - 1.0, 0.0))
    if cfg.B is not None:
        s = np.minimum(s, cfg.B)
    M_plus, _ = slab_moments(XU, y, coords, s, cfg.rho, cfg.l, cfg.q)
    t_plus = _shifted_scale(M_plus, cfg.l)
    out = []
    if cfg.sign_rule == "thresholds":
        for i in range(len(s)):
            if not np.isfinite(M_plus[i]):
                sign = 0
            elif t_plus[i] <= 2 * s[i] - cfg.delta / 8:
                sign = 1
            elif t_plus[i] >= 2 * s[i] - cfg.delta / 16:
                sign = -1
            else:
                sign = 0
            out.append(SignDecision(sign, float(s[i]), float(t_plus[i]), math.nan))
        return out
    M_minus, _ = slab_moments(XU, y, coords, -s, cfg.rho, cfg.l, cfg.q)
    t_minus = _shifted_scale(M_minus, cfg.l)
    for i in range(len(s)):
        if not (np.isfinite(M_plus[i]) and np.isfinite(M_minus[i])) or abs(t_plus[i] - t_minus[i]) < cfg.delta / 16:
            sign = 0
        else:
            # the right sign removes the signal, leaving the smaller shifted scale
            sign = 1 if t_plus[i] < t_minus[i] else -1
        out.append(SignDecision(sign, float(s[i]), float(t_plus[i]), float(t_minus[i])))
    return out


def prune(T, counts, radius: float, k: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Greedy clustering of the signed estimates (rows of ``T``).

    Points are visited in order; a point within ``radius`` of an existing
    cluster's seed joins it.  Each cluster is represented by its member with
    the largest in-event count.  Returns ``(representatives, cluster_ids)``.
    Warns with :class:`OvercountWarning` when there are more than ``k`` clusters.
    """
    T = np.atleast_2d(np.asarray(T, dtype=float))
    counts = np.asarray(counts)
    if T.shape[0] == 0 or T.size == 0:
        raise NoCandidateError("no signed estimates to prune")
    seeds: list[int] = []
    ids = np.empty(T.shape[0], dtype=int)
    for i, t in enumerate(T):
        for c, sidx in enumerate(seeds):
            if np.linalg.norm(t - T[sidx]) < radius:
                ids[i] = c
                break
        else:
            ids[i] = len(seeds)
            seeds.append(i)
    reps = []
    for c in range(len(seeds)):
        members = np.flatnonzero(ids == c)
        reps.append(T[members[np.argmax(counts[members])]])
    if k is not None and len(reps) > k:
        warnings.warn(f"{len(reps)} clusters for k={k}", OvercountWarning, stacklevel=2)
    return np.asarray(reps), ids


def select_separated(reps, k: int, delta: float) -> np.ndarray:
    """Indices of up to ``k`` rows of ``reps`` (ordered strongest first), skipping
    rows closer than ``delta`` to one already chosen.  Separated weights are at
    least ``delta`` apart, so such rows are duplicates; they are used only if
    fewer than ``k`` separated rows exist."""
    chosen: list[int] = []
    for i in range(len(reps)):
        if len(chosen) == k:
            break
        if all(np.linalg.norm(reps[i] - reps[c]) >= delta for c in chosen):
            chosen.append(i)
    for i in range(len(reps)):
        if len(chosen) == k:
            break
        if i not in chosen:
            chosen.append(i)
    return np.asarray(chosen, dtype=int)


# --------------------------------------------------------------------------
# diagnostics
# --------------------------------------------------------------------------


def identifiability_diagnostic(dataset: UnknownIndexDataset, v, l_list: Sequence[int] = (2, 4, 6, 8),
                               rho: float = 0.3, q: int = 32, U=None) -> dict[int, float]:
    """Unclipped scale ``(M_v / (l-1)!!)^(1/l)`` for each even ``l``.

    As ``l`` grows the scale approaches ``sqrt(max_j (w_j.v)^2 + 1)``.
    """
    out = {}
    for l in l_list:
        cfg = GridConfig(l=int(l), rho=rho, q=q)
        M, _ = conditional_moment(dataset, v, None, cfg, U)
        out[int(l)] = float((M / double_factorial(int(l) - 1)) ** (1.0 / l))
    return out


def slab_probability(k: int, rho: float) -> float:
    """Exact ``P(|P_perp x| <= rho)`` for the (k-1)-dimensional Gaussian complement."""
    if k == 1:
        return 1.0
    return float(gammainc((k - 1) / 2, rho**2 / 2))


@dataclass(frozen=True)
class SandwichCheck:
    ratios_low: np.ndarray  # M_v / max_j E[y_j^l | A_v]
    passed: bool


def moment_sandwich(XU, latents, coords, M_v, rho: float, l: int) -> SandwichCheck:
    """``(1/8) Psi(v) <= M_v <= 2k Psi(v)`` with ``Psi(v) = max_j mean(y_j^l | A_v)``.

    ``latents`` are the per-model outcomes of the same records (n x k).
    """
    k = latents.shape[1]
    psi = np.zeros(len(coords))
    for j in range(k):
        sums, counts = slab_block_moments(XU, latents[:, j], coords, 0.0, rho, l, 1)
        psi = np.maximum(psi, sums[:, 0] / np.maximum(counts[:, 0], 1))
    ratio = np.asarray(M_v) / psi
    return SandwichCheck(ratio, bool(np.all((ratio >= 1 / 8) & (ratio <= 2 * k))))


# --------------------------------------------------------------------------
# pipeline
# --------------------------------------------------------------------------


@dataclass
class GridResult:
    report: EstimationReport
    spectral: SpectralResult
    coords: np.ndarray  # net, in U coordinates
    V: np.ndarray  # net, ambient
    M_v: np.ndarray
    sigma_tilde: np.ndarray
    counts: np.ndarray
    clipped: np.ndarray
    candidates: np.ndarray  # indices into the net
    signs: list[SignDecision]
    estimates: np.ndarray  # all cluster representatives (rows)
    cluster_ids: np.ndarray  # per candidate, -1 for dropped candidates
    splits: tuple = field(default=())

    def net_points(self) -> list[NetPoint]:
        return [NetPoint(self.V[i], float(self.sigma_tilde[i]), float(self.M_v[i]),
                         int(self.counts[i]), bool(self.clipped[i])) for i in range(len(self.V))]

    def write_candidates(self, path) -> None:
        """CSV of candidates: ``v1..vd, sigma_tilde, M_v, count, sign, cluster``."""
        d = self.V.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"v{i + 1}" for i in range(d)] + ["sigma_tilde", "M_v", "count", "sign", "cluster"])
            for pos, i in enumerate(self.candidates):
                cid = self.cluster_ids[pos]
                w.writerow([f"{x:.17g}" for x in self.V[i]]
                           + [f"{self.sigma_tilde[i]:.17g}", f"{self.M_v[i]:.17g}", int(self.counts[i]),
                              self.signs[pos].sign, "" if cid < 0 else cid + 1])


def grid_estimate(dataset: UnknownIndexDataset, k: int, cfg: GridConfig = GridConfig(),
                  truth=None) -> GridResult:
    """Full pipeline; the report's estimate holds the ``k`` clusters with the largest scale."""
    start = time.perf_counter()
    part1, part2, part3 = dataset.split(cfg.splits)
    spec = spectral_subspace(part1, k)
    U = spec.basis
    coords, V = build_net(U, cfg.gamma_net, cfg.seed)

    XU2 = part2.X @ U
    M_v, counts = slab_moments(XU2, part2.y, coords, 0.0, cfg.rho, cfg.l, cfg.q)
    if not np.all(np.isfinite(M_v)):
        worst = int(counts[~np.isfinite(M_v)].min())
        raise InsufficientConditioningError(
            f"a slab holds only {worst} records; need at least {MIN_PER_BLOCK * cfg.q} (raise n or rho)")
    sigma_tilde, clipped = moment_scale(M_v, cfg.l)
    cand, flat = extract_candidates(coords, sigma_tilde, cfg.radius)

    XU3 = part3.X @ U
    signs = disambiguate_signs(XU3, part3.y, coords[cand], sigma_tilde[cand], cfg)
    ambiguous = [i for i, sd in enumerate(signs) if sd.sign == 0]
    if ambiguous:
        warnings.warn(f"dropped {len(ambiguous)} candidates with an ambiguous sign", AmbiguousSignWarning,
                      stacklevel=2)
    kept = [i for i, sd in enumerate(signs) if sd.sign != 0]
    if not kept:
        raise NoCandidateError("every candidate had an ambiguous sign")
    T = np.array([signs[i].sign * signs[i].s * V[cand[i]] for i in kept])
    reps, ids = prune(T, counts[cand[kept]], cfg.dedup, k)
    cluster_ids = np.full(len(cand), -1)
    cluster_ids[kept] = ids

    # order clusters by the scale of their best member, keep the top k
    strength = np.array([max(sigma_tilde[cand[kept[m]]] for m in np.flatnonzero(ids == c))
                         for c in range(len(reps))])
    order = np.argsort(-strength, kind="stable")
    reps = reps[order]
    remap = np.empty(len(order), dtype=int)
    remap[order] = np.arange(len(order))
    cluster_ids = np.where(cluster_ids >= 0, remap[np.maximum(cluster_ids, 0)], -1)
    W_hat = reps[select_separated(reps, k, cfg.delta)].T

    diagnostics = {
        "l": cfg.l, "rho": cfg.rho, "gamma_net": cfg.gamma_net, "q": cfg.q,
        "sign_rule": cfg.sign_rule,
        "spectral_eigenvalues": spec.eigenvalues, "spectral_gap": spec.gap,
        "spectral_degenerate": spec.degenerate,
        "net_size": int(len(coords)), "candidates": int(len(cand)), "flat_scores": flat,
        "ambiguous_signs": len(ambiguous), "clusters": int(len(reps)),
        "clipped_scales": int(clipped.sum()),
        "slab_count_min": int(counts.min()), "slab_count_max": int(counts.max()),
        "split_sizes": [part1.n, part2.n, part3.n],
    }
    report = EstimationReport("grid", W_hat, None if truth is None else np.asarray(truth, dtype=float),
                              None, diagnostics, time.perf_counter() - start)
    return GridResult(report, spec, coords, V, M_v, sigma_tilde, counts, clipped, cand, signs,
                      reps, cluster_ids, (part1.n, part2.n, part3.n))
