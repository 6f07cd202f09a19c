import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from loctime.paths import (
    GridExceededError,
    GridSpec,
    Path,
    alpha_p,
    local_time_field,
    simulate_killed_path,
    simulate_path,
)


def _path(xs, dt=1.0):
    return Path(dt, np.asarray(xs, dtype=float), float(xs[0]), 0)


def test_simulate_path_shape_and_start():
    p = simulate_path(1.0, 1e-3, start=0.7, seed=3)
    assert p.n_steps == 1000
    assert p.positions[0] == 0.7
    assert p.t_end == pytest.approx(1.0)
    assert not p.positions.flags.writeable


def test_same_seed_same_path_different_seed_differs():
    a = simulate_path(0.5, 1e-3, seed=11).positions
    b = simulate_path(0.5, 1e-3, seed=11).positions
    c = simulate_path(0.5, 1e-3, seed=12).positions
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


@pytest.mark.parametrize("kw", [dict(t_end=0.0, dt=0.1), dict(t_end=1.0, dt=-1.0), dict(t_end=1.0, dt=2.0),
                                dict(t_end=math.nan, dt=0.1)])
def test_simulate_path_rejects_bad_input(kw):
    with pytest.raises(ValueError):
        simulate_path(**kw)


def test_increments_have_brownian_variance():
    p = simulate_path(1.0, 1e-4, seed=5)
    inc = np.diff(p.positions)
    assert inc.var() / 1e-4 == pytest.approx(1.0, rel=0.03)


def test_linear_segment_spreads_evenly():
    grid = GridSpec(0.0, 1.0, 0.25)
    f = local_time_field(_path([0.0, 1.0 - 1e-12]), grid)
    assert np.allclose(f.values, 1.0)


def test_stationary_segment_lands_in_one_cell():
    grid = GridSpec(0.0, 1.0, 0.25)
    f = local_time_field(_path([0.3, 0.3, 0.3], dt=0.5), grid)
    assert f.values.tolist() == [0.0, 4.0, 0.0, 0.0]
    assert f.at(0.3) == 4.0


def test_partial_cells_get_overlap_share():
    grid = GridSpec(0.0, 1.0, 0.25)
    f = local_time_field(_path([0.125, 0.625]), grid)  # length 0.5, dt 1
    assert np.allclose(f.values * 0.25, [0.25, 0.5, 0.25, 0.0])


def test_grid_exceeded():
    grid = GridSpec(-1.0, 1.0, 0.1)
    with pytest.raises(GridExceededError):
        local_time_field(_path([0.0, 0.5, 1.2]), grid)
    with pytest.raises(GridExceededError):
        grid.cell_index(1.0)


def test_centered_grid_puts_cell_centres_on_lattice():
    g = GridSpec.centered(0.3, 1.0, 0.1)
    assert np.min(np.abs(g.centers - 0.3)) < 1e-12
    assert g.x_min <= 0.3 - 1.0 and g.x_max >= 0.3 + 1.0
    w = g.widened(0.25)
    assert w.n_cells == g.n_cells + 6
    assert np.min(np.abs(w.centers - 0.3)) < 1e-12


@pytest.mark.parametrize("kw", [dict(x_min=0, x_max=0, dx=0.1), dict(x_min=0, x_max=1, dx=0), dict(x_min=0, x_max=1, dx=1)])
def test_grid_validation(kw):
    with pytest.raises(ValueError):
        GridSpec(**kw)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32), dt=st.sampled_from([1e-2, 1e-3, 1e-4]), start=st.floats(-2, 2),
       dx=st.sampled_from([0.003, 0.01, 0.05]))
def test_occupation_identity(seed, dt, start, dx):
    p = simulate_path(0.5, dt, start=start, seed=seed)
    f = local_time_field(p, GridSpec.for_time(0.5, dx, center=start, sigmas=10))
    assert abs(f.total_mass() - p.t_end) <= 1e-9 * p.t_end
    assert np.all(f.values >= 0)


def test_alpha_p_on_flat_field():
    grid = GridSpec(0.0, 1.0, 0.25)
    f = local_time_field(_path([0.0, 1.0 - 1e-12], dt=2.0), grid)  # L = 2 on [0, 1)
    assert alpha_p(f, 1) == pytest.approx(2.0)
    assert alpha_p(f, 3) == pytest.approx(8.0)
    with pytest.raises(ValueError):
        alpha_p(f, 0)


def test_killed_path_stops_at_clock():
    p, clock = simulate_killed_path(2.0, 1e-3, start=0.1, seed=9)
    assert clock.rate == 2.0
    assert abs(p.t_end - clock.sampled_value) <= 0.5e-3 + 1e-15
    p2, clock2 = simulate_killed_path(2.0, 1e-3, start=0.1, seed=9)
    assert clock2 == clock and np.array_equal(p.positions, p2.positions)


def test_killed_clock_has_exponential_mean():
    lam = [simulate_killed_path(4.0, 1e-2, seed=s)[1].sampled_value for s in range(3000)]
    se = np.std(lam) / math.sqrt(len(lam))
    assert abs(np.mean(lam) - 0.25) <= 4 * se


def test_local_time_at_origin_mean():
    # E L^0_1 = int_0^1 p_s(0) ds = sqrt(2/pi)
    grid = GridSpec.for_time(1.0, 0.01, sigmas=8)
    v = [local_time_field(simulate_path(1.0, 1e-4, seed=1000 + i), grid).at(0.0) for i in range(1500)]
    se = np.std(v) / math.sqrt(len(v))
    assert abs(np.mean(v) - math.sqrt(2 / math.pi)) <= 4 * se
