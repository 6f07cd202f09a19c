"""Potential densities and heat kernels of 1-d Brownian motion, their finite
differences in space, and quadratures of powers of those differences.

Sign convention: ``diff_hh(f, x, h) = 2 f(x) - f(x+h) - f(x-h)``, i.e. the
forward difference applied after the backward one.  With this sign the second
difference of ``u^alpha`` is positive near the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal, Sequence

import numpy as np
from scipy import integrate

__all__ = [
    "PotentialParams",
    "QuadratureResult",
    "diff_h",
    "diff_hh",
    "heat_diff_power_direct",
    "heat_diff_power_fourier",
    "heat_kernel",
    "heat_kernel_time_integral",
    "integral_heat_diff_power",
    "integral_w_power",
    "integral_w_power_multi",
    "laplace_heat_integral",
    "second_statistic_mean",
    "sup_heat_bounds",
    "u_alpha",
    "u_hh_at_zero",
]

# exp(-TAIL_LOG) ~ 1e-16: infinite ranges are cut where the integrand has
# dropped by this factor from its peak
TAIL_LOG = 36.85
SQRT_2PI = math.sqrt(2.0 * math.pi)

Mode = Literal["plain", "diff_h", "diff_hh"]


@dataclass(frozen=True)
class PotentialParams:
    alpha: float
    h: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not 0 < self.h <= 1:
            raise ValueError(f"h must lie in (0, 1], got {self.h}")


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    abs_error_bound: float
    evaluations: int
    # independent second evaluation of the same quantity, when one was made
    alternate: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ArithmeticError(f"quadrature value is not finite: {self.value}")
        if not self.abs_error_bound >= 0:
            raise ArithmeticError(f"negative error bound {self.abs_error_bound}")


def _check_alpha(alpha):
    if np.any(np.asarray(alpha) <= 0):
        raise ValueError(f"alpha must be > 0, got {alpha!r}")


def u_alpha(x, alpha: float):
    """``exp(-sqrt(2 alpha)|x|)/sqrt(2 alpha)``, the Laplace transform in time
    of the heat kernel."""
    _check_alpha(alpha)
    c = math.sqrt(2.0 * alpha)
    return np.exp(-c * np.abs(x)) / c


def heat_kernel(t, x):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be > 0")
    x = np.asarray(x, dtype=float)
    return np.exp(-x * x / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)


def diff_h(f: Callable, x, h: float):
    return f(x + h) - f(x)


def diff_hh(f: Callable, x, h: float):
    return 2.0 * f(x) - f(x + h) - f(x - h)


def u_hh_at_zero(alpha: float, h: float) -> float:
    """Second difference of ``u^alpha`` at 0, written to avoid cancellation."""
    PotentialParams(alpha, h)
    c = math.sqrt(2.0 * alpha)
    return -2.0 * math.expm1(-c * h) / c


def _quad(f, a, b, *, points=None, epsabs=1e-13, epsrel=1e-12, limit=400):
    kw = dict(epsabs=epsabs, epsrel=epsrel, limit=limit, full_output=1)
    if points is not None and math.isfinite(a) and math.isfinite(b):
        pts = [p for p in points if a < p < b]
        if pts:
            kw["points"] = pts
    out = integrate.quad(f, a, b, **kw)
    return out[0], out[1], out[2]["neval"]


def _w_alpha(alpha: float, h: float):
    """Pointwise second difference of ``u^alpha``, evaluated stably."""
    c = math.sqrt(2.0 * alpha)
    far = 2.0 * (1.0 - math.cosh(c * h)) / c  # times exp(-c|x|) for |x| >= h

    def w(x):
        ax = abs(x)
        if ax >= h:
            return far * math.exp(-c * ax)
        # |x| < h: 2e^{-c|x|} - e^{-c(h+|x|)} - e^{-c(h-|x|)}, all over c
        return (2.0 * math.exp(-c * ax) - math.exp(-c * (h + ax)) - math.exp(-c * (h - ax))) / c

    return w


def integral_w_power(
    alpha: float, h: float, q: int, restrict_abs_ge_h: bool = False
) -> QuadratureResult:
    """Integral over the line (or over ``|x| >= h``) of the ``q``-th power of the
    second difference of ``u^alpha``."""
    return integral_w_power_multi([alpha] * int(q), h, restrict_abs_ge_h)


def integral_w_power_multi(
    alphas: Sequence[float], h: float, restrict_abs_ge_h: bool = False
) -> QuadratureResult:
    """Integral of the product of second differences of ``u^{alpha_i}``."""
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise ValueError("need at least one alpha")
    for a in alphas:
        PotentialParams(a, h)
    q = len(alphas)
    ws = [_w_alpha(a, h) for a in alphas]

    def f(x):
        r = 1.0
        for w in ws:
            r *= w(x)
        return r

    c_sum = sum(math.sqrt(2.0 * a) for a in alphas)
    x_cut = h + TAIL_LOG / c_sum
    # error target well below the h**(q+1) scale being measured
    tol = 1e-6 * h ** (q + 1)
    total, err, nev = 0.0, 0.0, 0
    pieces = [(h, x_cut)] if restrict_abs_ge_h else [(0.0, h), (h, x_cut)]
    for a, b in pieces:
        v, e, n = _quad(f, a, b, epsabs=tol / 4, epsrel=1e-12)
        total += v
        err += e
        nev += n
    # analytic bound on the discarded tail beyond x_cut
    tail = abs(f(x_cut)) / c_sum
    err += tail + 1e-16 * abs(total)
    return QuadratureResult(2.0 * total, 2.0 * err, nev)


def _p(t: float, x: float) -> float:
    return math.exp(-x * x / (2.0 * t)) / math.sqrt(2.0 * math.pi * t)


def _heat_integrand(x: float, h: float, mode: Mode, absolute: bool):
    if mode == "plain":
        g = lambda t: _p(t, x)
    elif mode == "diff_h":
        g = lambda t: _p(t, x + h) - _p(t, x)
    elif mode == "diff_hh":
        g = lambda t: 2.0 * _p(t, x) - _p(t, x + h) - _p(t, x - h)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if absolute:
        return lambda t: abs(g(t))
    return g


def heat_kernel_time_integral(
    x: float, T: float, mode: Mode = "plain", h: float = 0.0, absolute: bool = False
) -> float:
    """Integral over ``t`` in ``[0, T]`` of ``p_t``, its forward difference or its
    second difference at ``x`` (``T`` may be ``inf``).

    ``absolute=True`` integrates the absolute value instead.  The ``t^(-1/2)``
    singularity at 0 is removed by integrating in ``s = sqrt(t)``.
    """
    return _heat_time_quad(x, T, mode, h, absolute)[0]


def _heat_time_quad(x, T, mode, h, absolute, epsabs=1e-14):
    if not T > 0:
        raise ValueError(f"T must be > 0, got {T}")
    if mode != "plain" and not h > 0:
        raise ValueError("h must be > 0 for difference modes")
    g = _heat_integrand(float(x), float(h), mode, absolute)
    S = math.sqrt(T) if math.isfinite(T) else math.inf

    def f(s):
        if s * s == 0.0:
            # limit of 2s p_{s^2}(a): 2/sqrt(2 pi) at a=0, else 0
            if mode == "plain" and x == 0:
                return 2.0 / SQRT_2PI
            return 0.0
        return 2.0 * s * g(s * s)

    # each term exp(-a^2/2s^2) relaxes like a^2/s^2 over many decades of s;
    # geometric breakpoints from a upward keep it resolved when a << S
    dists = {abs(x), abs(x + h), abs(x - h)} - {0.0}
    top = min(S, 10.0)
    pts = sorted({a * 4.0**k for a in dists for k in range(40) if a * 4.0**k < top})
    if math.isfinite(S):
        return _quad(f, 0.0, S, points=pts, epsabs=epsabs)
    head = min(S, 4.0 * max(dists, default=1.0) + 1.0)
    v1, e1, n1 = _quad(f, 0.0, head, points=pts, epsabs=epsabs)
    v2, e2, n2 = _quad(f, head, math.inf, epsabs=epsabs)
    return v1 + v2, e1 + e2, n1 + n2


def laplace_heat_integral(x: float, alpha: float, epsabs: float = 1e-14) -> QuadratureResult:
    """``int_0^inf exp(-alpha t) p_t(x) dt`` by quadrature in ``s = sqrt(t)``;
    an independent route to ``u_alpha``."""
    _check_alpha(alpha)
    x = abs(float(x))

    def f(s):
        if s * s == 0.0:
            return 2.0 / SQRT_2PI if x == 0.0 else 0.0
        t = s * s
        return 2.0 * s * math.exp(-alpha * t) * _p(t, x)

    # the integrand peaks near s ~ sqrt(x / sqrt(2 alpha))
    mid = max(1.0, 4.0 * math.sqrt(x / math.sqrt(2.0 * alpha) + 1e-300))
    v1, e1, n1 = _quad(f, 0.0, mid, points=[math.sqrt(x)] if x else None, epsabs=epsabs)
    v2, e2, n2 = _quad(f, mid, math.inf, epsabs=epsabs)
    return QuadratureResult(v1 + v2, e1 + e2, n1 + n2)


def second_statistic_mean(t: float, h: float) -> float:
    """Exact mean of ``(int (L^{x+h}_t - L^x_t)^2 dx - 4 h t) / h^1.5`` for
    Brownian motion, via ``E int (dL)^2 dx = 4 int_0^t (t-r)(p_r(0)-p_r(h)) dr``."""
    if not (t > 0 and h > 0):
        raise ValueError("t and h must be > 0")

    def f(s):  # r = s^2
        if s * s == 0.0:
            return 2.0 * t / SQRT_2PI  # 2s p_{s^2}(0) -> 2/sqrt(2 pi); the p(h) part vanishes
        r = s * s
        return 2.0 * s * (t - r) * (_p(r, 0.0) - _p(r, h))

    v, _, _ = _quad(f, 0.0, math.sqrt(t), points=[h, math.sqrt(h)])
    return (4.0 * v - 4.0 * h * t) / h**1.5


def sup_heat_bounds(delta: float, T: float, h: float, x, n_t: int = 4001):
    """Suprema over ``t`` in ``[delta, T]`` of ``p_t(x)``, ``|forward diff|`` and
    ``|second diff|``, by dense geometric sampling in ``t``.  Vectorized in ``x``."""
    if not 0 < delta < T:
        raise ValueError("need 0 < delta < T")
    t = np.geomspace(delta, T, n_t)[:, None]
    x = np.atleast_1d(np.asarray(x, dtype=float))[None, :]
    p0 = heat_kernel(t, x)
    pp = heat_kernel(t, x + h)
    pm = heat_kernel(t, x - h)
    u = p0.max(axis=0)
    v = np.abs(pp - p0).max(axis=0)
    w = np.abs(2.0 * p0 - pp - pm).max(axis=0)
    return u, v, w


# ---- integrals of powers of the time-integrated second difference ----------

Upper = Literal["infinity", "h"]


def _upper_value(upper: Upper, h: float) -> float:
    if upper in ("infinity", "inf", math.inf):
        return math.inf
    if upper == "h":
        return h
    raise ValueError(f"upper must be 'infinity' or 'h', got {upper!r}")


def heat_diff_power_direct(h: float, q: int, upper: Upper = "infinity") -> QuadratureResult:
    """Nested adaptive quadrature: inner over time, outer over space."""
    if not 0 < h <= 1:
        raise ValueError("h must lie in (0, 1]")
    T = _upper_value(upper, h)
    evals = [0]

    def inner(x):
        v, _, n = _heat_time_quad(x, T, "diff_hh", h, False, epsabs=1e-15)
        evals[0] += n
        return v ** q

    spread = math.sqrt(T) if math.isfinite(T) else 1.0
    x_cut = h + 12.0 * spread
    tol = 1e-7 * h ** (q + 1)
    total, err = 0.0, 0.0
    for a, b in [(0.0, h), (h, 2 * h), (2 * h, x_cut)]:
        v, e, _ = _quad(inner, a, b, epsabs=tol, epsrel=1e-10, limit=200)
        total += v
        err += e
    return QuadratureResult(2.0 * total, 2.0 * err, evals[0])


def _gl_panels(breaks: np.ndarray, order: int):
    xg, wg = np.polynomial.legendre.leggauss(order)
    a, b = breaks[:-1, None], breaks[1:, None]
    half = (b - a) / 2
    nodes = (a + b) / 2 + half * xg[None, :]
    weights = half * wg[None, :]
    return nodes.ravel(), weights.ravel()


_GRADING = np.array([1e-3, 3e-3, 0.01, 0.02, 0.05, 0.1, 0.2, 0.35, 0.5, 0.75])


def _graded_breaks(centers, P: float) -> np.ndarray:
    """Unit panels on ``[-P, P]`` refined geometrically around each centre."""
    br = [np.arange(-P, P + 0.5, 1.0)]
    for c in centers:
        br.append(c + _GRADING)
        br.append(c - _GRADING)
    b = np.unique(np.clip(np.concatenate(br), -P, P))
    return b[np.diff(b, prepend=-np.inf) > 1e-12]


def _fourier_symbol(upper: Upper, h: float):
    T = _upper_value(upper, h)

    def F(p):
        p = np.asarray(p, dtype=float)
        out = np.empty_like(p)
        small = np.abs(p) < 1e-4
        ps = p[~small]
        out[~small] = np.sin(ps / 2) ** 2 / ps**2
        out[small] = 0.25 - p[small] ** 2 / 48.0
        if math.isfinite(T):
            # time cut-off at T = h, after rescaling p -> p/h
            out *= -np.expm1(-(p * p) / (2.0 * h))
        return out

    return F


def _fourier_integral(F, q: int, P: float, order: int) -> tuple[float, int]:
    if q == 2:
        nodes, wts = _gl_panels(_graded_breaks([0.0], P), order)
        f = F(nodes)
        return float(np.sum(wts * f * f)), nodes.size
    if q == 3:
        nodes, wts = _gl_panels(_graded_breaks([0.0], P), order)
        Fo = F(nodes)
        total = 0.0
        n = 0
        for p2, w2, f2 in zip(nodes, wts, Fo):
            inodes, iw = _gl_panels(_graded_breaks([0.0, -p2], P), order)
            total += w2 * f2 * float(np.sum(iw * F(inodes) * F(p2 + inodes)))
            n += inodes.size
        return total, n
    raise NotImplementedError("Fourier route implemented for q in {2, 3}")


def heat_diff_power_fourier(h: float, q: int, upper: Upper = "infinity", P: float = 200.0) -> QuadratureResult:
    """Frequency-domain form: ``8^q h^(q+1)/(2 pi)^(q-1)`` times the integral of
    ``prod_j F(p_j)`` over ``p_2..p_q`` with ``p_1 = p_2 + ... + p_q`` and
    ``F(p) = sin^2(p/2)/p^2`` (damped by ``1 - exp(-p^2/2h)`` when the time
    integral stops at ``h``).

    The error bound is the change between two Gauss-Legendre orders plus the
    truncation tail beyond ``|p| = P``.
    """
    if not 0 < h <= 1:
        raise ValueError("h must lie in (0, 1]")
    F = _fourier_symbol(upper, h)
    if q == 3:
        P = min(P, 60.0)
    lo, n1 = _fourier_integral(F, q, P, 6)
    hi, n2 = _fourier_integral(F, q, P, 10)
    # |F| <= 1/p^2 beyond P; the q=3 tail also carries a factor int F = pi/2
    tail = (2.0 / (3 * P**3)) * (1.0 if q == 2 else 2.0 * math.pi)
    pref = 8.0**q * h ** (q + 1) / (2.0 * math.pi) ** (q - 1)
    return QuadratureResult(pref * hi, pref * (abs(hi - lo) + tail), n1 + n2)


def integral_heat_diff_power(
    h: float, q: int, upper: Upper = "infinity", check: bool = True, rtol: float = 1e-3
) -> QuadratureResult:
    """Space integral of the ``q``-th power of the time-integrated second
    difference of the heat kernel.

    The value is the direct nested quadrature; for ``q`` in {2, 3} the
    frequency-domain evaluation is stored in ``alternate`` and, with
    ``check=True``, a relative disagreement above ``rtol`` raises
    ArithmeticError.
    """
    if int(q) != q or q < 2:
        raise ValueError("q must be an integer >= 2")
    direct = heat_diff_power_direct(h, q, upper)
    if q > 3:
        return direct
    four = heat_diff_power_fourier(h, q, upper)
    rel = abs(direct.value - four.value) / abs(four.value)
    if check and rel > rtol:
        raise ArithmeticError(
            f"direct {direct.value:.10g} and Fourier {four.value:.10g} disagree (rel {rel:.2e})"
        )
    return QuadratureResult(
        direct.value,
        max(direct.abs_error_bound, abs(direct.value - four.value)),
        direct.evaluations + four.evaluations,
        alternate=four.value,
    )
