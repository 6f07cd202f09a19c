"""Brownian path simulation and the occupation-density estimate of local time.

A path is a Gaussian random walk sampled every ``dt``; between samples it is
treated as the straight segment joining them.  ``local_time_field`` spreads
the time spent on each segment over the grid cells it crosses, in proportion
to the length of the overlap, so the total mass equals the elapsed time up to
float rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

__all__ = [
    "ExponentialClock",
    "GridExceededError",
    "GridSpec",
    "LocalTimeField",
    "Path",
    "alpha_p",
    "local_time_field",
    "simulate_killed_path",
    "simulate_path",
]


class GridExceededError(ValueError):
    """A path left the spatial grid it was binned on."""


def _check_positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise ValueError(f"{name} must be finite and > 0, got {value!r}")
    return value


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Path:
    dt: float
    positions: np.ndarray = field(repr=False)
    start: float
    seed: int

    @property
    def t_end(self) -> float:
        return self.dt * (len(self.positions) - 1)

    @property
    def n_steps(self) -> int:
        return len(self.positions) - 1

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.positions))


@dataclass(frozen=True)
class ExponentialClock:
    rate: float
    sampled_value: float


@dataclass(frozen=True)
class GridSpec:
    """Uniform cells ``[x_min + i*dx, x_min + (i+1)*dx)``."""

    x_min: float
    x_max: float
    dx: float

    def __post_init__(self):
        _check_positive("dx", self.dx)
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise ValueError("grid bounds must be finite")
        if not self.x_min < self.x_max:
            raise ValueError(f"x_min={self.x_min} must be < x_max={self.x_max}")
        if self.n_cells < 2:
            raise ValueError("grid needs at least two cells")

    @property
    def n_cells(self) -> int:
        return int(round((self.x_max - self.x_min) / self.dx))

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + self.dx * (np.arange(self.n_cells) + 0.5)

    def cell_index(self, x: float) -> int:
        i = int(math.floor((x - self.x_min) / self.dx))
        if not 0 <= i < self.n_cells:
            raise GridExceededError(f"x={x} lies outside [{self.x_min}, {self.x_max})")
        return i

    @classmethod
    def centered(cls, center: float, half_width: float, dx: float) -> "GridSpec":
        """Grid whose cell centres sit on ``center + k*dx``, covering at least
        ``center +- half_width``."""
        k = int(math.ceil(half_width / dx))
        return cls(center - (k + 0.5) * dx, center + (k + 0.5) * dx, dx)

    @classmethod
    def for_time(cls, t: float, dx: float, center: float = 0.0, sigmas: float = 6.0) -> "GridSpec":
        return cls.centered(center, sigmas * math.sqrt(max(t, dx * dx)), dx)

    def widened(self, amount: float) -> "GridSpec":
        k = int(math.ceil(amount / self.dx))
        return GridSpec(self.x_min - k * self.dx, self.x_max + k * self.dx, self.dx)


@dataclass(frozen=True)
class LocalTimeField:
    grid: GridSpec
    values: np.ndarray = field(repr=False)
    t: float

    def total_mass(self) -> float:
        return float(math.fsum(self.values) * self.grid.dx)

    def at(self, x: float) -> float:
        """Local time of the cell containing ``x``."""
        return float(self.values[self.grid.cell_index(x)])


def simulate_path(t_end: float, dt: float, start: float = 0.0, seed: int = 0) -> Path:
    t_end = _check_positive("t_end", t_end)
    dt = _check_positive("dt", dt)
    if dt > t_end * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds t_end={t_end}")
    n_steps = max(1, int(round(t_end / dt)))
    rng = np.random.default_rng(seed)
    return Path(dt, _frozen(_walk(rng, n_steps, dt, start)), float(start), int(seed))


def simulate_killed_path(
    rate: float, dt: float, start: float = 0.0, seed: int = 0
) -> tuple[Path, ExponentialClock]:
    """Path run up to an independent exponential time of mean ``1/rate``.

    The clock is drawn first from the seeded stream, then the increments.  The
    path stops at ``round(clock/dt)`` steps, so ``t_end`` is within ``dt/2`` of
    the clock value.
    """
    rate = _check_positive("rate", rate)
    dt = _check_positive("dt", dt)
    rng = np.random.default_rng(seed)
    lam = float(rng.exponential(1.0 / rate))
    while lam <= 0.0:  # measure zero, but keep the invariant
        lam = float(rng.exponential(1.0 / rate))
    n_steps = int(round(lam / dt))
    path = Path(dt, _frozen(_walk(rng, n_steps, dt, start)), float(start), int(seed))
    return path, ExponentialClock(rate, lam)


def _walk(rng: np.random.Generator, n_steps: int, dt: float, start: float) -> np.ndarray:
    pos = np.empty(n_steps + 1)
    pos[0] = 0.0
    if n_steps:
        rng.standard_normal(out=pos[1:])
        pos[1:] *= math.sqrt(dt)
        np.cumsum(pos[1:], out=pos[1:])
    if start:
        pos += start
    return pos


@numba.njit(cache=True, nogil=True)
def _deposit(u, dt, n_cells, occ):
    # u: positions in cell units; returns -1 on success, else the offending step
    for k in range(u.shape[0] - 1):
        a = u[k]
        b = u[k + 1]
        if a <= b:
            lo = a
            hi = b
        else:
            lo = b
            hi = a
        i0 = int(math.floor(lo))
        i1 = int(math.floor(hi))
        if i0 < 0 or i1 >= n_cells:
            return k
        if i0 == i1:
            occ[i0] += dt
        else:
            w = dt / (hi - lo)
            occ[i0] += w * (i0 + 1 - lo)
            for i in range(i0 + 1, i1):
                occ[i] += w
            occ[i1] += w * (hi - i1)
    return -1


def local_time_field(path: Path, grid: GridSpec) -> LocalTimeField:
    """Occupation density of the piecewise-linear interpolant of ``path``.

    Raises GridExceededError if any part of the path lies outside the grid.
    """
    n = grid.n_cells
    occ = np.zeros(n)
    u = (np.asarray(path.positions) - grid.x_min) / grid.dx
    if len(u) == 1:
        # zero elapsed time: only a bounds check
        i = int(math.floor(u[0]))
        if not 0 <= i < n:
            raise GridExceededError(f"start {path.start} outside grid")
    else:
        bad = _deposit(u, path.dt, n, occ)
        if bad >= 0:
            seg = path.positions[bad : bad + 2]
            raise GridExceededError(
                f"grid exceeded: segment {bad} spans [{seg.min():.6g}, {seg.max():.6g}] "
                f"outside [{grid.x_min:.6g}, {grid.x_max:.6g})"
            )
    occ /= grid.dx
    return LocalTimeField(grid, _frozen(occ), path.t_end)


def alpha_p(field: LocalTimeField, p: int) -> float:
    """Midpoint-rule value of the integral of ``L**p`` over space."""
    if int(p) != p or p < 1:
        raise ValueError(f"p must be an integer >= 1, got {p!r}")
    v = field.values
    return float(np.sum(v**p) * field.grid.dx)
