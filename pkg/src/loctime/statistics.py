"""Centered, normalized increment functionals of a local time field and the
moments of their mixed-normal limits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .paths import LocalTimeField

__all__ = [
    "LimitConstant",
    "MomentEstimate",
    "StatisticSample",
    "fourth_moment_statistic",
    "increment_field",
    "lag_cells",
    "limit_constant",
    "mixed_normal_moment",
    "second_moment_statistic",
    "third_moment_statistic",
]

Kind = Literal["second", "third", "fourth"]


@dataclass(frozen=True)
class StatisticSample:
    kind: Kind
    h: float
    t: float
    value: float
    alpha_companion: float


@dataclass(frozen=True)
class LimitConstant:
    q: int
    c_q: float

    @property
    def squared(self) -> float:
        return self.c_q**2


@dataclass(frozen=True)
class MomentEstimate:
    """Sample mean of i.i.d. draws with its standard error ``std/sqrt(n)``."""

    mean: float
    std_error: float
    n: int
    raw_second_moment: float

    @classmethod
    def from_samples(cls, x) -> "MomentEstimate":
        x = np.asarray(x, dtype=float)
        n = x.size
        if n == 0:
            raise ValueError("no samples")
        mean = float(np.mean(x))
        se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(mean, se, n, float(np.mean(x * x)))

    @classmethod
    def exact(cls, value: float) -> "MomentEstimate":
        return cls(float(value), 0.0, 1, float(value) ** 2)

    def scaled(self, factor: float) -> "MomentEstimate":
        return MomentEstimate(
            self.mean * factor, self.std_error * abs(factor), self.n, self.raw_second_moment * factor**2
        )


def lag_cells(h: float, dx: float) -> int:
    """Number of grid cells in the lag ``h``; ``h`` must be a multiple of ``dx``."""
    if not (math.isfinite(h) and h > 0):
        raise ValueError(f"h must be finite and > 0, got {h!r}")
    k = int(round(h / dx))
    if k < 1 or abs(k * dx - h) > 1e-12 * h:
        raise ValueError(f"h={h} is not an integer multiple of dx={dx}")
    return k


def increment_field(field: LocalTimeField, h: float) -> np.ndarray:
    """``L(x+h) - L(x)`` per cell; zero in the last ``h/dx`` cells."""
    k = lag_cells(h, field.grid.dx)
    return _increments(field.values, k)


def _increments(v: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros_like(v)
    if k < len(v):
        out[:-k] = v[k:] - v[:-k]
    return out


def second_moment_statistic(field: LocalTimeField, h: float) -> StatisticSample:
    dx = field.grid.dx
    d = increment_field(field, h)
    L = field.values
    num = np.sum(d * d) * dx - 4.0 * h * field.t
    return StatisticSample("second", h, field.t, float(num / h**1.5), float(np.sum(L**2) * dx))


def third_moment_statistic(field: LocalTimeField, h: float) -> StatisticSample:
    dx = field.grid.dx
    d = increment_field(field, h)
    L = field.values
    num = np.sum(d**3) * dx - 12.0 * h * np.sum(d * L) * dx - 24.0 * h * h * field.t
    return StatisticSample("third", h, field.t, float(num / h**2), float(np.sum(L**3) * dx))


def fourth_moment_statistic(
    field: LocalTimeField, h: float, grouping: Literal["joint", "split"] = "joint"
) -> StatisticSample:
    """Fourth-power analogue, normalized by ``h**2.5``.

    ``grouping="joint"`` puts both ``L**2`` and ``-(dL)*L`` under the ``48 h**2``
    integral.  ``"split"`` keeps only ``L**2`` there and subtracts the cross
    term pointwise, which is not dimensionally consistent; it exists for
    comparison only.
    """
    dx = field.grid.dx
    d = increment_field(field, h)
    L = field.values
    quartic = np.sum(d**4) * dx
    cross2 = np.sum(d * d * L) * dx
    if grouping == "joint":
        last = np.sum(L * L - d * L) * dx
    elif grouping == "split":
        last = np.sum(L * L) * dx - float(np.sum(d * L))
    else:
        raise ValueError(f"unknown grouping {grouping!r}")
    num = quartic - 24.0 * h * cross2 + 48.0 * h * h * last
    return StatisticSample("fourth", h, field.t, float(num / h**2.5), float(np.sum(L**4) * dx))


def limit_constant(q: int) -> LimitConstant:
    if int(q) != q or q < 2:
        raise ValueError(f"q must be an integer >= 2, got {q!r}")
    q = int(q)
    return LimitConstant(q, math.sqrt(2 ** (2 * q + 1) * math.factorial(q) / (q + 1)))


def gaussian_moment(m: int) -> int:
    """``E eta**m`` for a standard normal: ``(2n)!/(2**n n!)`` for ``m = 2n``, else 0."""
    if m % 2:
        return 0
    n = m // 2
    return math.factorial(2 * n) // (2**n * math.factorial(n))


def mixed_normal_moment(m: int, c: float, alpha_samples: Sequence[float]) -> MomentEstimate:
    """``E[(c sqrt(A) eta)**m]`` with ``A`` estimated by the given samples."""
    if int(m) != m or m < 1:
        raise ValueError(f"moment order must be an integer >= 1, got {m!r}")
    a = np.asarray(alpha_samples, dtype=float)
    if a.size == 0:
        raise ValueError("alpha_samples is empty")
    if m % 2:
        return MomentEstimate(0.0, 0.0, a.size, 0.0)
    n = m // 2
    return MomentEstimate.from_samples(gaussian_moment(m) * c ** (2 * n) * a**n)
