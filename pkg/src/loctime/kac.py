"""Exact moments of local time at an independent exponential time.

For Brownian motion started at ``x0`` and killed at rate ``alpha``,

    E[ L^{x_1} ... L^{x_n} ] = sum over orderings pi of
                               prod_j u^alpha(x_{pi(j)} - x_{pi(j-1)}),

with ``x_{pi(0)} = x0``.  Finite differences in the ``x_j`` commute with the
expectation, so moments of increments are signed sums of the same formula at
shifted points.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .kernels import u_alpha

__all__ = [
    "ExpSum",
    "exponential_time_moment_check",
    "PermutationSumResult",
    "PermutationSumSpec",
    "kac_increment_moment",
    "kac_increment_moment_exact",
    "kac_moment",
    "kac_moment_exact",
    "kac_moment_many",
    "stencil_configurations",
]

N_MAX = 9

# shift, weight per difference flag
_STENCILS = {
    0: ((0, 1),),
    1: ((1, 1), (0, -1)),
    2: ((0, 2), (1, -1), (-1, -1)),
}


class SizeError(ValueError):
    """Too many points for exhaustive enumeration."""


@dataclass(frozen=True)
class PermutationSumSpec:
    points: tuple[float, ...]
    alpha: float
    start: float = 0.0
    diff_flags: tuple[int, ...] = ()
    h: float = 0.0
    n_max: int = N_MAX

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        flags = tuple(self.diff_flags) or (0,) * len(self.points)
        object.__setattr__(self, "diff_flags", flags)
        if len(flags) != len(self.points):
            raise ValueError("diff_flags must match points in length")
        if any(f not in _STENCILS for f in flags):
            raise ValueError(f"diff flags must be 0, 1 or 2, got {flags}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if len(self.points) > self.n_max:
            raise SizeError(f"{len(self.points)} points exceeds n_max={self.n_max}")
        if any(flags) and not self.h > 0:
            raise ValueError("h must be > 0 when a difference is requested")

    @property
    def n(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class PermutationSumResult:
    value: float
    n_permutations: int
    n_configurations: int = 1
    exact: "ExpSum | None" = field(default=None, compare=False)


@lru_cache(maxsize=None)
def _permutations(n: int) -> np.ndarray:
    # itertools yields in lexicographic order
    return np.array(list(itertools.permutations(range(n))), dtype=np.intp).reshape(-1, n)


def _perm_terms(points: Sequence[float], alpha: float, start: float) -> np.ndarray:
    n = len(points)
    xs = np.array([float(start), *map(float, points)])
    U = u_alpha(xs[:, None] - xs[None, :], alpha)
    perms = _permutations(n) + 1
    prev = np.concatenate([np.zeros((perms.shape[0], 1), dtype=np.intp), perms[:, :-1]], axis=1)
    return np.prod(U[prev, perms], axis=1)


def kac_moment(spec: PermutationSumSpec) -> PermutationSumResult:
    if any(spec.diff_flags):
        raise ValueError("kac_moment takes plain points; use kac_increment_moment")
    if spec.n == 0:
        return PermutationSumResult(1.0, 1)
    terms = _perm_terms(spec.points, spec.alpha, spec.start)
    return PermutationSumResult(math.fsum(terms), math.factorial(spec.n))


def stencil_configurations(spec: PermutationSumSpec) -> dict[tuple[float, ...], int]:
    """Signed multiplicities of the shifted point multisets produced by the
    requested differences; configurations equal as multisets are merged."""
    out: dict[tuple[float, ...], int] = defaultdict(int)
    per_point = [_STENCILS[f] for f in spec.diff_flags]
    for combo in itertools.product(*per_point):
        pts = tuple(sorted(x + s * spec.h for x, (s, _) in zip(spec.points, combo)))
        out[pts] += math.prod(w for _, w in combo)
    return {k: v for k, v in out.items() if v}


def kac_increment_moment(spec: PermutationSumSpec) -> PermutationSumResult:
    """Moment of products of (differenced) local times at the exponential time."""
    configs = stencil_configurations(spec)
    parts = []
    for pts, weight in configs.items():
        if pts:
            parts.extend(weight * _perm_terms(pts, spec.alpha, spec.start))
        else:
            parts.append(float(weight))
    return PermutationSumResult(math.fsum(parts), math.factorial(spec.n), len(configs))


def kac_moment_many(
    points: np.ndarray, alpha: float, start: float = 0.0, diff_flags: Sequence[int] = (), h: float = 0.0
) -> np.ndarray:
    """``kac_increment_moment`` for a batch of point tuples, shape ``(B, n)``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    B, n = pts.shape
    flags = tuple(diff_flags) or (0,) * n
    PermutationSumSpec(tuple(pts[0]), alpha, start, flags, h)  # validation only
    merged: dict[tuple[int, ...], int] = defaultdict(int)
    for combo in itertools.product(*[_STENCILS[f] for f in flags]):
        merged[tuple(s for s, _ in combo)] += math.prod(w for _, w in combo)
    perms = _permutations(n)
    c = math.sqrt(2.0 * alpha)
    total = np.zeros(B)
    for shifts, weight in merged.items():
        if not weight:
            continue
        xs = pts + h * np.asarray(shifts, dtype=float)
        acc = np.zeros(B)
        for perm in perms:
            d = np.abs(xs[:, perm[0]] - start)
            for j in range(1, n):
                d = d + np.abs(xs[:, perm[j]] - xs[:, perm[j - 1]])
            acc += np.exp(-c * d)
        total += weight * acc / c**n
    return total


# ---- exact mode for alpha = 1/2 ----------------------------------------------


@dataclass(frozen=True)
class ExpSum:
    """``sum_k coeff_k * exp(-d_k)`` with integer coefficients and rational
    exponents ``d_k``; exact at ``alpha = 1/2`` where ``u(x) = exp(-|x|)``."""

    terms: tuple[tuple[Fraction, int], ...]

    @classmethod
    def from_counts(cls, counts: dict[Fraction, int]) -> "ExpSum":
        return cls(tuple(sorted((d, c) for d, c in counts.items() if c)))

    def __float__(self) -> float:
        return math.fsum(c * math.exp(-float(d)) for d, c in self.terms)

    def evaluate(self, dps: int = 50):
        import mpmath

        with mpmath.workdps(dps):
            return mpmath.fsum(c * mpmath.exp(-mpmath.mpf(d.numerator) / d.denominator) for d, c in self.terms)


def _as_fraction(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(str(x))


def _exact_counts(points: Sequence[Fraction], start: Fraction, counts, weight: int):
    for perm in itertools.permutations(points):
        d = Fraction(0)
        prev = start
        for p in perm:
            d += abs(p - prev)
            prev = p
        counts[d] += weight


def kac_moment_exact(spec: PermutationSumSpec) -> PermutationSumResult:
    """Exact evaluation for ``alpha = 1/2`` with decimal/rational inputs."""
    return kac_increment_moment_exact(spec)


def kac_increment_moment_exact(spec: PermutationSumSpec) -> PermutationSumResult:
    if spec.alpha != 0.5:
        raise ValueError("exact mode requires alpha = 1/2")
    pts = [_as_fraction(x) for x in spec.points]
    h = _as_fraction(spec.h)
    start = _as_fraction(spec.start)
    counts: dict[Fraction, int] = defaultdict(int)
    merged: dict[tuple[Fraction, ...], int] = defaultdict(int)
    for combo in itertools.product(*[_STENCILS[f] for f in spec.diff_flags]):
        key = tuple(sorted(x + s * h for x, (s, _) in zip(pts, combo)))
        merged[key] += math.prod(w for _, w in combo)
    for key, weight in merged.items():
        if weight:
            _exact_counts(key, start, counts, weight)
    exact = ExpSum.from_counts(counts)
    return PermutationSumResult(float(exact), math.factorial(spec.n), len(merged), exact)


def exponential_time_moment_check(m: int, h: float, zeta: float, n_paths: int, **kw):
    """Monte Carlo moment ``m`` of the exponential-time third-power statistic
    against its limit; see :func:`loctime.harness.exponential_time_moment_check`."""
    from .harness import exponential_time_moment_check as run

    return run(m, h, zeta, n_paths, **kw)
