import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from loctime.paths import GridSpec, LocalTimeField, local_time_field, simulate_path
from loctime.statistics import (
    MomentEstimate,
    fourth_moment_statistic,
    gaussian_moment,
    increment_field,
    lag_cells,
    limit_constant,
    mixed_normal_moment,
    second_moment_statistic,
    third_moment_statistic,
)


def _field(values, dx=0.01, t=1.0):
    v = np.asarray(values, dtype=float)
    grid = GridSpec(0.0, dx * len(v), dx)
    return LocalTimeField(grid, v, t)


def test_lag_cells():
    assert lag_cells(0.02, 0.002) == 10
    with pytest.raises(ValueError):
        lag_cells(0.015, 0.01)
    with pytest.raises(ValueError):
        lag_cells(0.0, 0.01)


def test_increment_field_zero_in_last_cells():
    f = _field([1.0, 2.0, 4.0, 8.0])
    assert increment_field(f, 0.02).tolist() == [3.0, 6.0, 0.0, 0.0]


def test_zero_field_gives_pure_centering():
    f = _field(np.zeros(50), t=0.5)
    h = 0.02
    assert second_moment_statistic(f, h).value == pytest.approx(-4 * h * 0.5 / h**1.5)
    assert third_moment_statistic(f, h).value == pytest.approx(-24 * h * h * 0.5 / h**2)


def test_statistics_on_hand_field():
    dx, h = 0.01, 0.01
    L = np.array([0.0, 1.0, 3.0, 2.0, 0.0])
    f = _field(L, dx=dx, t=0.08)
    d = np.array([1.0, 2.0, -1.0, -2.0, 0.0])
    s2 = (np.sum(d**2) * dx - 4 * h * 0.08) / h**1.5
    s3 = (np.sum(d**3) * dx - 12 * h * np.sum(d * L) * dx - 24 * h * h * 0.08) / h**2
    s4 = (np.sum(d**4) * dx - 24 * h * np.sum(d * d * L) * dx + 48 * h * h * np.sum(L * L - d * L) * dx) / h**2.5
    assert second_moment_statistic(f, h).value == pytest.approx(s2)
    assert third_moment_statistic(f, h).value == pytest.approx(s3)
    assert fourth_moment_statistic(f, h).value == pytest.approx(s4)
    assert second_moment_statistic(f, h).alpha_companion == pytest.approx(np.sum(L**2) * dx)


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.integers(3, 40), elements=st.floats(0, 10)), st.integers(1, 3))
def test_summation_by_parts_identity(inner, k):
    # fields vanishing at both ends satisfy sum(dL * L) = -sum(dL^2)/2 exactly
    v = np.concatenate([np.zeros(k), inner, np.zeros(k)])
    d = np.zeros_like(v)
    d[:-k] = v[k:] - v[:-k]
    assert np.sum(d * v) == pytest.approx(-0.5 * np.sum(d * d), rel=1e-9, abs=1e-9)


def test_fourth_grouping():
    f = _field([0.0, 1.0, 3.0, 2.0, 0.0])
    j = fourth_moment_statistic(f, 0.01, "joint").value
    s = fourth_moment_statistic(f, 0.01, "split").value
    assert j != s
    with pytest.raises(ValueError):
        fourth_moment_statistic(f, 0.01, "other")


def test_limit_constants():
    assert limit_constant(2).squared == pytest.approx(64 / 3)
    assert limit_constant(3).squared == pytest.approx(192)
    assert limit_constant(4).squared == pytest.approx(2457.6)
    with pytest.raises(ValueError):
        limit_constant(1)


def test_gaussian_moments():
    assert [gaussian_moment(m) for m in range(1, 9)] == [0, 1, 0, 3, 0, 15, 0, 105]


def test_mixed_normal_moment():
    a = np.array([1.0, 2.0, 3.0])
    assert mixed_normal_moment(3, 5.0, a).mean == 0.0
    m2 = mixed_normal_moment(2, 2.0, a)
    assert m2.mean == pytest.approx(8.0)
    assert mixed_normal_moment(4, 2.0, a).mean == pytest.approx(3 * 16 * np.mean(a**2))
    with pytest.raises(ValueError):
        mixed_normal_moment(2, 1.0, [])


def test_mixed_normal_moments_match_simulation():
    rng = np.random.default_rng(0)
    a = rng.gamma(2.0, size=200_000)
    x = 3.0 * np.sqrt(a) * rng.standard_normal(a.size)
    for m in (2, 4):
        est = mixed_normal_moment(m, 3.0, a)
        assert np.mean(x**m) == pytest.approx(est.mean, rel=0.05)


def test_moment_estimate():
    x = np.arange(10.0)
    e = MomentEstimate.from_samples(x)
    assert e.mean == 4.5
    assert e.std_error == pytest.approx(np.std(x, ddof=1) / math.sqrt(10))
    assert e.raw_second_moment == pytest.approx(np.mean(x * x))
    s = e.scaled(-2.0)
    assert s.mean == -9.0 and s.std_error == pytest.approx(2 * e.std_error)
    assert MomentEstimate.exact(2.0).std_error == 0.0
    with pytest.raises(ValueError):
        MomentEstimate.from_samples([])


def test_discrete_estimator_is_scale_equivariant():
    # a path and its diffusively rescaled copy give identically rescaled functionals
    h, dt, dx = 0.5, 1e-3, 0.01
    p = simulate_path(1.0, dt, seed=4)
    from loctime.paths import Path

    q = Path(dt / h**2, np.asarray(p.positions) / h, 0.0, 4)
    fa = local_time_field(p, GridSpec.centered(0.0, 5.0, dx))
    fb = local_time_field(q, GridSpec.centered(0.0, 5.0 / h, dx / h))
    da, db = increment_field(fa, h), increment_field(fb, 1.0)
    assert np.sum(da**3) * dx == pytest.approx(h**4 * np.sum(db**3) * dx / h, rel=1e-9)
    assert np.sum(da * fa.values) * dx == pytest.approx(h**3 * np.sum(db * fb.values) * dx / h, rel=1e-9)
