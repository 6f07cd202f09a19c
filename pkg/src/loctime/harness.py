"""Seeded, parallel Monte Carlo experiments and deterministic quadrature checks.

Every simulated path ``i`` of stream ``k`` draws from its own generator seeded by
``path_seed(base_seed, k, i)`` (a ``SeedSequence`` spawn key), so results do not
depend on how paths are scheduled.  Each worker returns a fixed-length row of
per-path functionals; rows are stacked in index order and reduced once, which
makes aggregates bit-identical for any thread count.
"""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

from . import calibration
from .kac import PermutationSumSpec, kac_increment_moment
from .kernels import (
    integral_heat_diff_power,
    integral_w_power,
    integral_w_power_multi,
    laplace_heat_integral,
    second_statistic_mean,
    u_alpha,
    u_hh_at_zero,
)
from .paths import GridExceededError, GridSpec, Path, local_time_field, simulate_killed_path, simulate_path
from .report import (
    CheckResult,
    ExperimentConfig,
    ExperimentReport,
    GatePolicy,
    code_version,
    compare_to_oracle,
)
from .statistics import (
    MomentEstimate,
    _increments,
    fourth_moment_statistic,
    lag_cells,
    limit_constant,
    second_moment_statistic,
    third_moment_statistic,
)

__all__ = [
    "exponential_time_moment_check",
    "map_paths",
    "parse_kac_points",
    "path_seed",
    "run_experiment",
    "scaling_check",
    "variance_identity_check",
]

log = logging.getLogger(__name__)

BATCH = 64
MAX_RETRY_RATE = 0.01
OCCUPATION_RTOL = 1e-9


# ---- seeding and parallel map -------------------------------------------------


def path_seed(base_seed: int, stream: int, index: int) -> int:
    """64-bit seed for path ``index`` of ``stream``; frozen scheme."""
    ss = np.random.SeedSequence(int(base_seed) % 2**64, spawn_key=(int(stream), int(index)))
    return int(ss.generate_state(1, np.uint64)[0])


def resolve_threads(threads: int) -> int:
    if threads < 0:
        raise ValueError("threads must be >= 0")
    return threads or os.cpu_count() or 1


def map_paths(fn: Callable[[int], Sequence[float]], n: int, threads: int = 1, batch: int = BATCH) -> np.ndarray:
    """Evaluate ``fn(i)`` for ``i < n`` and stack the rows in index order."""

    def work(lo: int) -> np.ndarray:
        return np.array([fn(i) for i in range(lo, min(n, lo + batch))], dtype=float)

    starts = range(0, n, batch)
    threads = resolve_threads(threads)
    if threads == 1:
        parts = [work(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, starts))
    return np.concatenate(parts, axis=0)


def field_with_retry(path: Path, grid: GridSpec, t: float):
    """Local time field, widening the grid by ``2 sqrt(t)`` until the path fits."""
    retries = 0
    while True:
        try:
            return local_time_field(path, grid), retries
        except GridExceededError:
            retries += 1
            grid = grid.widened(2.0 * math.sqrt(max(t, grid.dx**2)))


def _mass_error(field) -> float:
    err = abs(field.total_mass() - field.t)
    return err / field.t if field.t > 0 else err


# ---- estimators ---------------------------------------------------------------


def variance_estimate(x: np.ndarray) -> MomentEstimate:
    """Unbiased sample variance with the standard error of the mean of the
    squared deviations."""
    x = np.asarray(x, dtype=float)
    n = x.size
    d2 = (x - x.mean()) ** 2
    v = float(d2.mean() * n / (n - 1))
    return MomentEstimate(v, float(d2.std(ddof=1) / math.sqrt(n)), n, float(np.mean(d2 * d2)))


def ratio_estimate(num: np.ndarray, den: np.ndarray) -> tuple[float, float]:
    """``mean(num)/mean(den)`` with a delta-method standard error."""
    mn, md = float(num.mean()), float(den.mean())
    r = mn / md
    d = num - r * den
    return r, float(d.std(ddof=1) / (math.sqrt(num.size) * abs(md)))


# ---- check builders -----------------------------------------------------------


def _z_check(cfg, name, anchor, est, oracle, oracle_se=0.0, *, h=None, statistic="mean", rel=None,
             gating=True, est_src="", oracle_src="", note="") -> CheckResult:
    policy = GatePolicy(3.0, rel).scaled(cfg.multiplier(name))
    v = compare_to_oracle(est, oracle, oracle_se, policy)
    gate = f"|z| <= {policy.z_max:g}"
    if policy.rel_tol is not None:
        gate += f" or |rel| <= {policy.rel_tol:g} (looser)"
    return CheckResult(name, anchor, v.passed, gating, h, statistic, est.mean, est.std_error, oracle,
                       oracle_se, v.z, gate, est_src, oracle_src, note)


def _band_check(cfg, name, anchor, value, se, lo, hi, *, h=None, gating=True, statistic="ratio",
                est_src="", oracle_src="", note="") -> CheckResult:
    m = cfg.multiplier(name)
    lo, hi = 1.0 - (1.0 - lo) * m, 1.0 + (hi - 1.0) * m
    ok = lo <= value <= hi
    z = (value - 1.0) / se if se > 0 else None
    return CheckResult(name, anchor, ok, gating, h, statistic, value, se, 1.0, 0.0, z,
                       f"{lo:g} <= ratio <= {hi:g}", est_src, oracle_src, note)


def _rel_check(cfg, name, anchor, value, oracle, rtol, *, h=None, gating=True, statistic="ratio",
               est_src="", oracle_src="", err=0.0, note="") -> CheckResult:
    tol = rtol * cfg.multiplier(name)
    rel = abs(value / oracle - 1.0)
    return CheckResult(name, anchor, rel <= tol, gating, h, statistic, value, err, oracle, 0.0, None,
                       f"|rel| <= {tol:g}", est_src, oracle_src, note)


def _max_check(cfg, name, anchor, value, limit, *, h=None, gating=True, statistic="max", est_src="",
               oracle_src="", note="") -> CheckResult:
    lim = limit * cfg.multiplier(name)
    return CheckResult(name, anchor, bool(value <= lim), gating, h, statistic, value, 0.0, lim, 0.0, None,
                       f"value <= {lim:g}", est_src, oracle_src, note)


def _decreasing_check(cfg, name, anchor, hs, errors, *, gating=True, note="") -> CheckResult:
    order = np.argsort(hs)[::-1]  # from largest h to smallest
    e = [abs(errors[i]) for i in order]
    ok = all(b < a for a, b in zip(e, e[1:]))
    seq = ", ".join(f"h={hs[i]:g}: {abs(errors[i]):.4g}" for i in order)
    return CheckResult(name, anchor, ok, gating, None, "trend", e[-1], 0.0, 0.0, 0.0, None,
                       "error strictly decreasing as h decreases", "per-h rows", "", seq + (f"; {note}" if note else ""))


def _path_rows(cfg, retries_col: np.ndarray, mass_err_col: np.ndarray) -> list[CheckResult]:
    n = retries_col.size
    rate = float(retries_col.sum() / n)
    return [
        _max_check(cfg, "occupation.pathwise", "occupation.identity", float(mass_err_col.max()),
                   OCCUPATION_RTOL, statistic="max |sum(L) dx - t| / t",
                   est_src=f"all {n} simulated paths", oracle_src="elapsed time"),
        _max_check(cfg, "grid.retry_rate", "harness.grid_retry", rate, MAX_RETRY_RATE, gating=False,
                   statistic="retries per path", est_src="grid-exceeded retries",
                   note="above the limit the experiment is marked degraded"),
    ]


# ---- CLT experiments ----------------------------------------------------------

_CLT_CACHE: dict[tuple, np.ndarray] = {}
_CLT_CACHE_MAX = 4


def _clt_table(cfg: ExperimentConfig, threads: int) -> np.ndarray:
    """Per-path columns ``[mass_err, retries, a2, a3, a4]`` then ``[s2, s3, s4]``
    per lag.  Memoized on the simulation parameters: the three CLT kinds share
    the same paths and functionals."""
    grid = cfg.grid
    key = (cfg.t, cfg.dt, grid, cfg.start, cfg.h_list, cfg.n_paths, cfg.base_seed)
    if key in _CLT_CACHE:
        return _CLT_CACHE[key]

    def one(i: int):
        path = simulate_path(cfg.t, cfg.dt, cfg.start, path_seed(cfg.base_seed, 0, i))
        field, retries = field_with_retry(path, grid, cfg.t)
        v = field.values
        dx = field.grid.dx
        row = [_mass_error(field), retries, np.sum(v**2) * dx, np.sum(v**3) * dx, np.sum(v**4) * dx]
        for h in cfg.h_list:
            row += [
                second_moment_statistic(field, h).value,
                third_moment_statistic(field, h).value,
                fourth_moment_statistic(field, h).value,
            ]
        return row

    table = map_paths(one, cfg.n_paths, threads)
    if len(_CLT_CACHE) >= _CLT_CACHE_MAX:
        _CLT_CACHE.pop(next(iter(_CLT_CACHE)))
    _CLT_CACHE[key] = table
    return table


def _clt(cfg: ExperimentConfig, threads: int):
    tab = _clt_table(cfg, threads)
    checks = _path_rows(cfg, tab[:, 1], tab[:, 0])
    a = {2: tab[:, 2], 3: tab[:, 3], 4: tab[:, 4]}
    kind = cfg.experiment_kind
    ratios, hs = [], []
    for j, h in enumerate(cfg.h_list):
        s2, s3, s4 = tab[:, 5 + 3 * j], tab[:, 6 + 3 * j], tab[:, 7 + 3 * j]
        exact2 = second_statistic_mean(cfg.t, h) if cfg.start == 0 else math.nan
        if kind == "clt2":
            q, x, anchor, exact = 2, s2, "clt2.limit_variance", exact2
        elif kind == "clt3":
            q, x, anchor, exact = 3, s3, "clt3.limit_variance", 6.0 * math.sqrt(h) * exact2
        else:
            q, x, anchor, exact = 4, s4, "conjecture.fourth_moment", math.nan
        # the limit is approached as h -> 0: gate at the finest lag only
        gating = kind != "clt4_conjecture" and h == min(cfg.h_list)
        c2 = limit_constant(q).squared
        mean = MomentEstimate.from_samples(x)
        oracle = MomentEstimate.from_samples(c2 * a[q])
        var = variance_estimate(x)
        checks.append(_z_check(cfg, f"{kind}.mean", anchor, mean, 0.0, h=h, gating=gating,
                               est_src="sample mean of the statistic", oracle_src="limit law is centred"))
        checks.append(_z_check(cfg, f"{kind}.variance", anchor, var, oracle.mean, oracle.std_error, h=h,
                               statistic="variance", rel=0.15, gating=gating,
                               est_src="sample variance of the statistic",
                               oracle_src=f"{c2:.6g} * sample mean of int L^{q} dx"))
        if not math.isnan(exact):
            checks.append(_z_check(cfg, f"{kind}.mean_exact_finite_h", anchor, mean, exact, h=h, gating=False,
                                   est_src="sample mean of the statistic",
                                   oracle_src="exact finite-h mean of the continuum statistic (quadrature)",
                                   note="diagnostic: the centred limit is only reached as h -> 0"))
        if kind == "clt3":
            m3 = MomentEstimate.from_samples(x**3)
            checks.append(_z_check(cfg, "clt3.third_moment", "clt3.odd_moments", m3, 0.0, h=h,
                                   statistic="third moment", gating=gating, est_src="sample mean of stat^3",
                                   oracle_src="odd moments of the mixed normal limit vanish"))
        if kind == "clt2":
            m3 = MomentEstimate.from_samples(x**3)
            checks.append(_z_check(cfg, "clt2.third_moment", anchor, m3, 0.0, h=h, statistic="third moment",
                                   gating=False, est_src="sample mean of stat^3",
                                   oracle_src="odd moments of the mixed normal limit vanish"))
        ratios.append(var.mean / oracle.mean - 1.0)
        hs.append(h)
    if len(hs) >= 2:
        checks.append(_decreasing_check(cfg, f"{kind}.variance_trend", anchor, hs, ratios, gating=False,
                                        note="relative error of variance vs limit"))
    return checks, cfg.n_paths, int(tab[:, 1].sum())


# ---- scaling ------------------------------------------------------------------


def _scaling(cfg: ExperimentConfig, threads: int):
    checks: list[CheckResult] = []
    n_done, retries_total = 0, 0
    grid_a = cfg.grid
    for h in cfg.h_list:
        k_a = lag_cells(h, cfg.dx)
        grid_b = GridSpec.centered(0.0, (grid_a.x_max - grid_a.x_min) / 2 / h, cfg.dx / h)
        k_b = lag_cells(1.0, grid_b.dx)
        t_b, dt_b = cfg.t / h**2, cfg.dt / h**2

        def side(t, dt, grid, k, stream):
            def one(i):
                path = simulate_path(t, dt, 0.0, path_seed(cfg.base_seed, stream, i))
                field, r = field_with_retry(path, grid, t)
                d = _increments(field.values, k)
                dx = field.grid.dx
                return [_mass_error(field), r] + [np.sum(d**p) * dx for p in cfg.powers] + [
                    np.sum(d * field.values) * dx
                ]

            return map_paths(one, cfg.n_paths, threads)

        A = side(cfg.t, cfg.dt, grid_a, k_a, 0)
        B = side(t_b, dt_b, grid_b, k_b, 1)
        both_r = np.concatenate([A[:, 1], B[:, 1]])
        both_m = np.concatenate([A[:, 0], B[:, 0]])
        checks += [_with_h(c, h) for c in _path_rows(cfg, both_r, both_m)]
        n_done += 2 * cfg.n_paths
        retries_total += int(both_r.sum())
        for j, p in enumerate(list(cfg.powers) + ["cross"]):
            expo = 3 if p == "cross" else p + 1
            ea = MomentEstimate.from_samples(A[:, 2 + j])
            eb = MomentEstimate.from_samples(B[:, 2 + j]).scaled(h**expo)
            what = "int (D^h L_t) L_t dx" if p == "cross" else f"int (D^h L_t)^{p} dx"
            checks.append(_z_check(cfg, f"scaling.{'cross' if p == 'cross' else f'power{p}'}", "scaling.diffusive",
                                   ea, eb.mean, eb.std_error, h=h,
                                   est_src=f"mean of {what}, t={cfg.t:g}, lag {h:g}",
                                   oracle_src=f"h^{expo} * mean of the lag-1 functional at t/h^2={t_b:g}, "
                                              "independent stream"))
    return checks, n_done, retries_total


def _with_h(c: CheckResult, h: float) -> CheckResult:
    c.h = h
    return c


# ---- killed paths -------------------------------------------------------------


def parse_kac_points(text: str) -> list[tuple[tuple[float, ...], tuple[int, ...]]]:
    """``"0 | 0,0.5 | 0@1,0@1 | 0@2"``: cases separated by ``|``, points by
    ``,``; ``x@1`` is the forward difference and ``x@2`` the second difference
    at ``x``."""
    cases = []
    for chunk in text.split("|"):
        chunk = chunk.strip()
        if not chunk:
            continue
        pts, flags = [], []
        for item in chunk.split(","):
            item = item.strip()
            x, _, f = item.partition("@")
            pts.append(float(x))
            flags.append(int(f) if f else 0)
            if flags[-1] not in (0, 1, 2):
                raise ValueError(f"bad difference flag in {item!r}")
        PermutationSumSpec(tuple(pts), 1.0, 0.0, tuple(flags), 1.0)
        cases.append((tuple(pts), tuple(flags)))
    if not cases:
        raise ValueError("no points given")
    return cases


def _stencil_value(v: np.ndarray, i: int, k: int, flag: int) -> float:
    if flag == 0:
        return v[i]
    if flag == 1:
        return v[i + k] - v[i]
    return 2.0 * v[i] - v[i + k] - v[i - k]


def _kac(cfg: ExperimentConfig, threads: int):
    cases = parse_kac_points(cfg.kac_points)
    h = cfg.h_list[0]
    k = lag_cells(h, cfg.dx)
    grid = cfg.grid
    zeta = cfg.zeta
    idx = [[grid.cell_index(x) for x in pts] for pts, _ in cases]

    def one(i):
        path, clock = simulate_killed_path(zeta, cfg.dt, cfg.start, path_seed(cfg.base_seed, 0, i))
        field, r = field_with_retry(path, grid, 1.0 / zeta)
        v = field.values
        row = [_mass_error(field), r, field.total_mass()]
        for (pts, flags), ii in zip(cases, idx):
            # index shift if the grid was widened
            off = int(round((grid.x_min - field.grid.x_min) / grid.dx))
            row.append(math.prod(_stencil_value(v, j + off, k, f) for j, f in zip(ii, flags)))
        return row

    tab = map_paths(one, cfg.n_paths, threads)
    checks = _path_rows(cfg, tab[:, 1], tab[:, 0])
    checks.append(_z_check(cfg, "occupation.mean_total", "occupation.identity", MomentEstimate.from_samples(tab[:, 2]),
                           1.0 / zeta, est_src="mean of sum(L) dx over killed paths",
                           oracle_src="mean killing time 1/zeta"))
    for c, ((pts, flags), ii) in enumerate(zip(cases, idx)):
        sites = tuple(float(grid.centers[j]) for j in ii)
        spec = PermutationSumSpec(sites, zeta, cfg.start, flags, h if any(flags) else 0.0)
        exact = kac_increment_moment(spec).value
        label = ",".join(f"{x:g}" + (f"@{f}" if f else "") for x, f in zip(pts, flags))
        checks.append(_z_check(cfg, f"kac[{label}]", "kac.moment_formula", MomentEstimate.from_samples(tab[:, 3 + c]),
                               exact, h=h if any(flags) else None,
                               est_src="mean of the product of cell local times at the killing time",
                               oracle_src="exact permutation sum at the cell centres"))
    return checks, cfg.n_paths, int(tab[:, 1].sum())


def _exp_time(cfg: ExperimentConfig, threads: int):
    zeta = cfg.zeta
    grid = cfg.grid
    lags = [lag_cells(h, cfg.dx) for h in cfg.h_list]
    uhh = [u_hh_at_zero(zeta, h) for h in cfg.h_list]

    def one(i):
        path, _ = simulate_killed_path(zeta, cfg.dt, cfg.start, path_seed(cfg.base_seed, 0, i))
        field, r = field_with_retry(path, grid, 1.0 / zeta)
        L = field.values
        dx = field.grid.dx
        row = [_mass_error(field), r, field.total_mass(), np.sum(L**3) * dx]
        sum_l = np.sum(L) * dx
        for h, k, u in zip(cfg.h_list, lags, uhh):
            d = _increments(L, k)
            stat = np.sum(d**3) * dx - 6.0 * u * np.sum(L * d) * dx - 6.0 * u * u * sum_l
            row.append(stat / h**2)
        return row

    tab = map_paths(one, cfg.n_paths, threads)
    checks = _path_rows(cfg, tab[:, 1], tab[:, 0])
    checks.append(_z_check(cfg, "occupation.mean_total", "occupation.identity", MomentEstimate.from_samples(tab[:, 2]),
                           1.0 / zeta, est_src="mean of sum(L) dx over killed paths",
                           oracle_src="mean killing time 1/zeta"))
    a3 = tab[:, 3]
    for j, h in enumerate(cfg.h_list):
        x = tab[:, 4 + j]
        checks.append(_z_check(cfg, "exp_time.m1", "exp_time.statistic_moments", MomentEstimate.from_samples(x), 0.0,
                               h=h, est_src="mean of the exponential-time statistic",
                               oracle_src="odd moments vanish in the limit"))
        r, se = ratio_estimate(x * x, 192.0 * a3)
        checks.append(_band_check(cfg, "exp_time.m2", "exp_time.statistic_moments", r, se, 0.8, 1.2, h=h,
                                  est_src="mean of statistic^2", oracle_src="192 * sample mean of int L^3 dx"))
    return checks, cfg.n_paths, int(tab[:, 1].sum())


# ---- two-path variance identity ----------------------------------------------


def _variance_identity(cfg: ExperimentConfig, threads: int):
    s = cfg.t if cfg.s is None else cfg.s
    grid = cfg.grid
    lags = [lag_cells(h, cfg.dx) for h in cfg.h_list]

    def one(i):
        p1 = simulate_path(cfg.t, cfg.dt, cfg.start, path_seed(cfg.base_seed, 0, i))
        p2 = simulate_path(s, cfg.dt, cfg.start, path_seed(cfg.base_seed, 1, i))
        f1, r1 = field_with_retry(p1, grid, cfg.t)
        f2, r2 = field_with_retry(p2, grid, s)
        L, Lt = _common(f1, f2)
        dx = grid.dx
        row = [max(_mass_error(f1), _mass_error(f2)), r1 + r2]
        J = np.sum(L * L * Lt) * dx
        for h, k in zip(cfg.h_list, lags):
            d = _increments(L, k)
            dt_ = _increments(Lt, k)
            V = (np.sum((d * d - 4.0 * h * L) * dt_) * dx) ** 2
            row += [V, J]
        return row

    tab = map_paths(one, cfg.n_paths, threads)
    checks = _path_rows(cfg, tab[:, 1], tab[:, 0])
    degenerate = min(cfg.t, s) < 100 * cfg.dt
    h_min = min(cfg.h_list)
    errs = []
    for j, h in enumerate(cfg.h_list):
        V, J = tab[:, 2 + 2 * j], tab[:, 3 + 2 * j]
        if degenerate:
            checks.append(_z_check(cfg, "variance_identity.absolute", "variance_identity.leading_term",
                                   MomentEstimate.from_samples(V - 32 * h**4 * J), 0.0, h=h,
                                   est_src="mean of V - 32 h^4 J", oracle_src="both sides vanish as s -> 0"))
            continue
        r, se = ratio_estimate(V, 32.0 * h**4 * J)
        errs.append(r - 1.0)
        checks.append(_band_check(cfg, "variance_identity.ratio", "variance_identity.leading_term", r, se, 0.8, 1.25,
                                  h=h, gating=(h == h_min),
                                  est_src="mean of (int{(D^h L_t)^2 - 4h L_t} D^h L'_s dx)^2",
                                  oracle_src="32 h^4 * mean of int L_t^2 L'_s dx"))
        checks.append(_band_check(cfg, "variance_identity.ratio_64", "variance_identity.leading_term", r / 2.0,
                                  se / 2.0, 0.8, 1.25, h=h, gating=False,
                                  est_src="same estimate", oracle_src="64 h^4 * mean of int L_t^2 L'_s dx",
                                  note="diagnostic comparison against twice the stated leading coefficient"))
    if not degenerate and len(cfg.h_list) >= 2:
        checks.append(_decreasing_check(cfg, "variance_identity.trend", "variance_identity.leading_term",
                                        list(cfg.h_list), errs, note="|ratio - 1| per h"))
    return checks, 2 * cfg.n_paths, int(tab[:, 1].sum())


def _common(f1, f2):
    """Both fields on one grid (they differ only if a retry widened one)."""
    if f1.grid == f2.grid:
        return f1.values, f2.values
    lo = min(f1.grid.x_min, f2.grid.x_min)
    hi = max(f1.grid.x_max, f2.grid.x_max)
    dx = f1.grid.dx
    n = int(round((hi - lo) / dx))
    out = []
    for f in (f1, f2):
        a = np.zeros(n)
        o = int(round((f.grid.x_min - lo) / dx))
        a[o : o + f.grid.n_cells] = f.values
        out.append(a)
    return out[0], out[1]


# ---- quadrature-only kinds ----------------------------------------------------


def _lemma21(cfg: ExperimentConfig, threads: int):
    checks: list[CheckResult] = []
    xs = np.linspace(-5.0, 5.0, 101)
    err = max(abs(laplace_heat_integral(x, a).value - float(u_alpha(x, a))) for a in (0.5, 1.0, 2.0) for x in xs)
    checks.append(_max_check(cfg, "potential.laplace_identity", "potential.laplace_identity", err, 1e-6,
                             statistic="max abs error", est_src="quadrature of exp(-a t) p_t(x) over t",
                             oracle_src="closed-form potential density; a in {0.5,1,2}, 101 x in [-5,5]"))
    hs = sorted(cfg.h_list, reverse=True)
    h_min = hs[-1]
    a = cfg.alpha
    for q in cfg.q_list:
        target = 2 ** (q + 1) / (q + 1)
        errs, restricted = [], []
        for h in hs:
            res = integral_w_power(a, h, q)
            r = res.value / h ** (q + 1)
            errs.append(r / target - 1.0)
            checks.append(_rel_check(cfg, f"potential.w_power_q{q}", "potential.second_difference_power", r, target,
                                     0.10, h=h, gating=(h == h_min), err=res.abs_error_bound / h ** (q + 1),
                                     est_src=f"quadrature / h^{q + 1}", oracle_src=f"2^{q + 1}/{q + 1}"))
            rr = integral_w_power(a, h, q, restrict_abs_ge_h=True).value / h ** (q + 1)
            restricted.append(rr)
        checks.append(_decreasing_check(cfg, f"potential.w_power_q{q}_trend", "potential.second_difference_power",
                                        hs, errs, note="relative error of ratio"))
        checks.append(_decreasing_check(cfg, f"potential.w_power_q{q}_restricted", "potential.second_difference_power",
                                        hs, restricted, note="|x| >= h part / h^(q+1), tends to 0"))
    for alphas in ((0.5, 1.0, 2.0), (0.5, 2.0)):
        q = len(alphas)
        target = 2 ** (q + 1) / (q + 1)
        res = integral_w_power_multi(alphas, h_min)
        checks.append(_rel_check(cfg, f"potential.w_power_multi{list(alphas)}", "potential.second_difference_power",
                                 res.value / h_min ** (q + 1), target, 0.10, h=h_min,
                                 est_src="mixed-rate quadrature / h^(q+1)", oracle_src=f"2^{q + 1}/{q + 1}"))
    hz = 1e-4
    checks.append(_rel_check(cfg, "potential.second_difference_at_zero", "potential.second_difference_power",
                             u_hh_at_zero(a, hz) / hz, 2.0, 1e-3, h=hz, est_src="closed form / h",
                             oracle_src="leading coefficient 2"))
    consts = calibration.load_calibration()
    p = calibration.CALIBRATION_POINT
    for key in calibration.KEYS:
        for h in hs:
            r = float(np.max(calibration.bound_ratios(key, a, h, p["T"], p["delta"])))
            checks.append(_max_check(cfg, f"bounds.{key}", f"bounds.{key}", r, consts[key], h=h,
                                     statistic="max observed ratio", est_src="sampled x",
                                     oracle_src="frozen fitted constant (calibration file)"))
    return checks, 0, 0


def _lemma24(cfg: ExperimentConfig, threads: int):
    checks: list[CheckResult] = []
    hs = sorted(cfg.h_list, reverse=True)
    h_min = hs[-1]
    for q in cfg.q_list:
        target = 2 ** (q + 1) / (q + 1)
        for upper in ("infinity", "h"):
            errs = []
            for h in hs:
                res = integral_heat_diff_power(h, q, upper, check=False)
                r = res.value / h ** (q + 1)
                errs.append(r / target - 1.0)
                checks.append(_rel_check(cfg, f"heat.power_q{q}_{upper}", "heat.second_difference_power", r, target,
                                         0.15, h=h, gating=(h == h_min), err=res.abs_error_bound / h ** (q + 1),
                                         est_src="direct nested quadrature / h^(q+1)",
                                         oracle_src=f"2^{q + 1}/{q + 1}"))
                if res.alternate is not None:
                    checks.append(_rel_check(cfg, f"heat.fourier_direct_q{q}_{upper}", "heat.second_difference_power",
                                             res.alternate, res.value, 1e-3, h=h, statistic="value",
                                             est_src="Fourier representation", oracle_src="direct quadrature"))
            if len(hs) >= 2:
                checks.append(_decreasing_check(cfg, f"heat.power_q{q}_{upper}_trend", "heat.second_difference_power",
                                                hs, errs, gating=False))
    return checks, 0, 0


_RUNNERS = {
    "clt2": _clt,
    "clt3": _clt,
    "clt4_conjecture": _clt,
    "scaling": _scaling,
    "kac_oracle": _kac,
    "exp_time_moments": _exp_time,
    "variance_identity": _variance_identity,
    "lemma21_integrals": _lemma21,
    "lemma24_integrals": _lemma24,
}


def run_experiment(config: ExperimentConfig, threads: int = 0, overrides: Sequence[str] = ()) -> ExperimentReport:
    config.validate()
    if config.allow_coarse_dt:
        log.warning("resolution rule sqrt(dt) <= h/5 disabled by allow_coarse_dt")
    t0 = time.perf_counter()
    checks, n_done, retries = _RUNNERS[config.experiment_kind](config, threads)
    notes = []
    if config.allow_coarse_dt:
        notes.append("allow_coarse_dt set: the sqrt(dt) <= h/5 resolution rule was not enforced")
    report = ExperimentReport(
        config=config,
        checks=checks,
        n_paths_completed=n_done,
        retries=retries,
        code_version=code_version(),
        overrides=list(overrides),
        notes=notes,
    )
    report.degraded = n_done > 0 and report.retry_rate > MAX_RETRY_RATE
    report.wall_time = time.perf_counter() - t0
    return report


# ---- convenience entry points -------------------------------------------------


def variance_identity_check(t: float, s: float, h_list: Sequence[float], n_pairs: int, base_seed: int,
                            dt: float = 1e-5, dx: float = 0.002, threads: int = 0) -> ExperimentReport:
    cfg = ExperimentConfig("variance_identity", t=t, s=s, h_list=tuple(h_list), dt=dt, dx=dx,
                           n_paths=n_pairs, base_seed=base_seed)
    return run_experiment(cfg, threads)


def scaling_check(t: float, h: float, p: int, n_paths: int, base_seed: int, dt: float = 1e-4,
                  dx: float = 0.01, threads: int = 0) -> ExperimentReport:
    cfg = ExperimentConfig("scaling", t=t, h_list=(h,), dt=dt, dx=dx, n_paths=n_paths, base_seed=base_seed,
                           powers=(p,))
    return run_experiment(cfg, threads)


def exponential_time_moment_check(m: int, h: float, zeta: float, n_paths: int, base_seed: int = 1,
                                  dt: float = 1e-5, dx: float = 0.002, threads: int = 0) -> ExperimentReport:
    if m not in (1, 2):
        raise ValueError(f"m must be 1 or 2, got {m!r}")
    cfg = ExperimentConfig("exp_time_moments", h_list=(h,), zeta=zeta, dt=dt, dx=dx, n_paths=n_paths,
                           base_seed=base_seed)
    report = run_experiment(cfg, threads)
    drop = "exp_time.m2" if m == 1 else "exp_time.m1"
    report.checks = [c for c in report.checks if c.name != drop]
    return report
