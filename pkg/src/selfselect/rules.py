"""Self-selection rules, their slices, and the slice membership/projection oracles.

A rule maps the vector of latent outcomes ``y in R^k`` to the index of the
observed model.  For a winner ``j`` and winning value ``a`` the slice is the
set of competitor outcomes ``y_{-j}`` under which ``j`` wins.  For every
rule implemented here that slice is a coordinate box, so the regions the
sampler works with are always ``box ∩ ball``.

Indices are 0-based in the Python API.  Files and reports written by the CLI
use 1-based indices.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InfeasibleRegionError, InvalidInputError
from .kernels import DYKSTRA_MAX_SWEEPS, DYKSTRA_TOL, project_box_ball


class RuleKind(enum.Enum):
    ARGMAX = "argmax"
    ARGMIN = "argmin"
    MONOTONE_ARGMAX = "monotone"


@dataclass(frozen=True)
class MonotoneMap:
    """Strictly increasing scalar map with its inverse and (open) range."""

    name: str
    forward: Callable[[np.ndarray], np.ndarray]
    inverse: Callable[[float], float]
    range_lo: float = -math.inf
    range_hi: float = math.inf


def _identity(_i):
    return MonotoneMap("identity", lambda t: t, lambda s: s)


def _exp(_i):
    return MonotoneMap("exp", np.exp, math.log, 0.0, math.inf)


def _cubic(_i):
    return MonotoneMap("cubic", lambda t: np.asarray(t) ** 3, lambda s: math.copysign(abs(s) ** (1 / 3), s))


def _tanh(_i):
    return MonotoneMap("tanh", np.tanh, math.atanh, -1.0, 1.0)


def _shift(i):
    b = 0.5 * i
    return MonotoneMap(f"shift{i}", lambda t, b=b: np.asarray(t) + b, lambda s, b=b: s - b)


def _scale(i):
    c = 1.0 + 0.5 * i
    return MonotoneMap(f"scale{i}", lambda t, c=c: c * np.asarray(t), lambda s, c=c: s / c)


# preset name -> factory taking the model index
MONOTONE_PRESETS: dict[str, Callable[[int], MonotoneMap]] = {
    "identity": _identity,
    "exp": _exp,
    "cubic": _cubic,
    "tanh": _tanh,
    "shift": _shift,
    "scale": _scale,
}


@dataclass(frozen=True)
class SelectionRule:
    kind: RuleKind
    k: int
    maps: tuple[MonotoneMap, ...] = field(default=(), compare=False)
    preset: str | None = None

    def __post_init__(self):
        if self.k < 1:
            raise InvalidInputError("k must be a positive integer")
        if self.kind is RuleKind.MONOTONE_ARGMAX and len(self.maps) != self.k:
            raise InvalidInputError("monotone rule needs exactly k maps")

    @classmethod
    def argmax(cls, k: int) -> "SelectionRule":
        return cls(RuleKind.ARGMAX, k)

    @classmethod
    def argmin(cls, k: int) -> "SelectionRule":
        return cls(RuleKind.ARGMIN, k)

    @classmethod
    def monotone(cls, k: int, maps: Sequence[MonotoneMap] | str) -> "SelectionRule":
        preset = None
        if isinstance(maps, str):
            preset = maps
            try:
                factory = MONOTONE_PRESETS[maps]
            except KeyError:
                raise InvalidInputError(f"unknown monotone preset {maps!r}") from None
            maps = [factory(i) for i in range(k)]
        return cls(RuleKind.MONOTONE_ARGMAX, k, tuple(maps), preset)

    @classmethod
    def parse(cls, spec: str, k: int) -> "SelectionRule":
        """Parse ``"argmax"``, ``"argmin"`` or ``"monotone:<preset>"``."""
        spec = spec.strip().lower()
        if spec == "argmax":
            return cls.argmax(k)
        if spec == "argmin":
            return cls.argmin(k)
        if spec.startswith("monotone:"):
            return cls.monotone(k, spec.split(":", 1)[1])
        raise InvalidInputError(f"unknown selection rule {spec!r}")

    def to_spec(self) -> str:
        if self.kind is RuleKind.MONOTONE_ARGMAX:
            return f"monotone:{self.preset or 'custom'}"
        return self.kind.value

    # -- selection -------------------------------------------------------

    def _scores(self, Y: np.ndarray) -> np.ndarray:
        if self.kind is RuleKind.ARGMAX:
            return Y
        if self.kind is RuleKind.ARGMIN:
            return -Y
        return np.column_stack([m.forward(Y[:, i]) for i, m in enumerate(self.maps)])

    def select_many(self, Y) -> np.ndarray:
        """Winner index for each row of ``Y``; ties go to the smallest index."""
        Y = np.asarray(Y, dtype=float)
        if Y.ndim != 2 or Y.shape[1] != self.k:
            raise InvalidInputError(f"expected an (n, {self.k}) array of outcomes")
        if not np.all(np.isfinite(Y)):
            raise InvalidInputError("outcomes must be finite")
        return np.argmax(self._scores(Y), axis=1)

    def select(self, y) -> int:
        return int(self.select_many(np.asarray(y, dtype=float)[None, :])[0])

    # -- slices ------------------------------------------------------------

    def slice_bounds(self, j: int, a: float) -> tuple[np.ndarray, np.ndarray]:
        """Box bounds ``(lo, hi)`` of the slice for winner ``j`` at value ``a``.

        Coordinates follow the order of the competitors ``i != j``.  An upper
        bound of ``-inf`` marks an empty slice.
        """
        if not 0 <= j < self.k:
            raise InvalidInputError(f"winner index {j} out of range")
        if not math.isfinite(a):
            raise InvalidInputError("slice threshold must be finite")
        m = self.k - 1
        if self.kind is RuleKind.ARGMAX:
            return np.full(m, -math.inf), np.full(m, float(a))
        if self.kind is RuleKind.ARGMIN:
            return np.full(m, float(a)), np.full(m, math.inf)
        level = float(self.maps[j].forward(np.float64(a)))
        hi = np.empty(m)
        for pos, i in enumerate(i for i in range(self.k) if i != j):
            f = self.maps[i]
            if level >= f.range_hi:
                hi[pos] = math.inf
            elif level <= f.range_lo:
                hi[pos] = -math.inf
            else:
                hi[pos] = f.inverse(level)
        return np.full(m, -math.inf), hi

    def slice_bounds_many(self, jstar, a) -> tuple[np.ndarray, np.ndarray]:
        """Row-wise :meth:`slice_bounds`, each of shape ``(n, k - 1)``."""
        jstar = np.asarray(jstar, dtype=np.int64)
        a = np.asarray(a, dtype=float)
        n, m = a.shape[0], self.k - 1
        if np.any((jstar < 0) | (jstar >= self.k)):
            raise InvalidInputError("winner index out of range")
        if not np.all(np.isfinite(a)):
            raise InvalidInputError("slice threshold must be finite")
        if self.kind is RuleKind.ARGMAX:
            return np.full((n, m), -math.inf), np.repeat(a[:, None], m, axis=1)
        if self.kind is RuleKind.ARGMIN:
            return np.repeat(a[:, None], m, axis=1), np.full((n, m), math.inf)
        lo = np.empty((n, m))
        hi = np.empty((n, m))
        for r in range(n):
            lo[r], hi[r] = self.slice_bounds(int(jstar[r]), float(a[r]))
        return lo, hi


@dataclass(frozen=True)
class ConvexRegion:
    """The slice ``C_j(a)`` intersected with the centred ball ``B(R)``."""

    rule: SelectionRule
    j: int
    a: float
    R: float

    def __post_init__(self):
        if not self.R > 0:
            raise InvalidInputError("ball radius must be positive")
        lo, hi = self.rule.slice_bounds(self.j, self.a)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.rule.k - 1

    def nearest_to_origin(self) -> np.ndarray:
        return np.clip(np.zeros(self.dim), self.lo, self.hi)

    @property
    def is_empty(self) -> bool:
        if np.any(self.hi == -math.inf) or np.any(self.lo > self.hi):
            return True
        return float(np.linalg.norm(self.nearest_to_origin())) > self.R

    def contains(self, z, tol: float = 0.0) -> bool:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise InvalidInputError(f"expected a vector of length {self.dim}")
        return bool(
            np.all(z >= self.lo - tol)
            and np.all(z <= self.hi + tol)
            and np.linalg.norm(z) <= self.R + tol
        )

    def project(self, z) -> np.ndarray:
        """Euclidean projection of a point (or each row of a 2-d array)."""
        if self.is_empty:
            raise InfeasibleRegionError(
                f"slice for winner {self.j} at {self.a!r} does not meet B({self.R!r})"
            )
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        out, _ = project_box_ball(z, self.lo, self.hi, self.R, DYKSTRA_TOL, DYKSTRA_MAX_SWEEPS)
        return out[0] if single else out


def select(rule: SelectionRule, y) -> int:
    return rule.select(y)


def slice_contains(region: ConvexRegion, z) -> bool:
    return region.contains(z)


def slice_project(region: ConvexRegion, z) -> np.ndarray:
    return region.project(z)
