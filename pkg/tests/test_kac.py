import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from loctime.harness import path_seed
from loctime.kac import (
    PermutationSumSpec,
    SizeError,
    kac_increment_moment,
    kac_increment_moment_exact,
    kac_moment,
    kac_moment_exact,
    kac_moment_many,
    stencil_configurations,
)
from loctime.kernels import u_alpha
from loctime.paths import GridSpec, local_time_field, simulate_killed_path


def u(x, a=1.0):
    return float(u_alpha(x, a))


def test_single_point_is_potential():
    r = kac_moment(PermutationSumSpec((0.37,), 1.0))
    assert r.value == pytest.approx(u(0.37), rel=1e-12)
    assert r.n_permutations == 1
    assert kac_moment(PermutationSumSpec((0.0,), 0.5)).value == 1.0


def test_two_points_hand_enumerated():
    a = 0.8
    assert kac_moment(PermutationSumSpec((0.0, 0.0), a)).value == pytest.approx(2 * u(0, a) ** 2, rel=1e-12)
    x, y, s = 0.3, -0.4, 0.1
    hand = u(x - s, a) * u(y - x, a) + u(y - s, a) * u(x - y, a)
    r = kac_moment(PermutationSumSpec((x, y), a, start=s))
    assert r.value == pytest.approx(hand, rel=1e-12)
    assert r.n_permutations == 2


def test_empty_and_size_limit():
    assert kac_moment(PermutationSumSpec((), 1.0)).value == 1.0
    with pytest.raises(SizeError):
        PermutationSumSpec(tuple(range(10)), 1.0)
    assert kac_moment(PermutationSumSpec(tuple(0.1 * i for i in range(9)), 1.0)).n_permutations == 362880


@pytest.mark.parametrize("kw", [dict(alpha=0.0), dict(diff_flags=(3,)), dict(diff_flags=(1,), h=0.0),
                                dict(diff_flags=(0, 0))])
def test_spec_validation(kw):
    base = dict(points=(0.0,), alpha=1.0)
    base.update(kw)
    with pytest.raises(ValueError):
        PermutationSumSpec(**base)


def test_plain_moment_rejects_flags():
    with pytest.raises(ValueError):
        kac_moment(PermutationSumSpec((0.0,), 1.0, diff_flags=(1,), h=0.1))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-2, 2), st.integers(0, 2)), min_size=1, max_size=4), st.randoms())
def test_invariant_under_relabelling(pairs, rnd):
    pts, flags = zip(*pairs)
    spec = PermutationSumSpec(pts, 0.9, 0.2, flags, 0.05)
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    p2, f2 = zip(*shuffled)
    assert kac_increment_moment(PermutationSumSpec(p2, 0.9, 0.2, f2, 0.05)).value == kac_increment_moment(spec).value


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=5), st.floats(0.1, 3), st.floats(-1, 1))
def test_positive(points, alpha, start):
    assert kac_moment(PermutationSumSpec(points, alpha, start)).value > 0


def test_second_difference_at_origin():
    for a, h in [(0.5, 0.1), (1.0, 0.03)]:
        r = kac_increment_moment(PermutationSumSpec((0.0,), a, 0.0, (2,), h))
        assert r.value == pytest.approx(2 * (u(0, a) - u(h, a)), rel=1e-12)
    h = 1e-5
    assert kac_increment_moment(PermutationSumSpec((0.0,), 0.5, 0.0, (2,), h)).value / h == pytest.approx(2.0, rel=1e-4)


def test_two_forward_differences_hand_expansion():
    a, h = 1.0, 0.1

    def m2(x, y):  # E[L^x L^y] from the origin
        return u(x, a) * u(y - x, a) + u(y, a) * u(x - y, a)

    hand = m2(h, h) - 2 * m2(0.0, h) + m2(0.0, 0.0)
    r = kac_increment_moment(PermutationSumSpec((0.0, 0.0), a, 0.0, (1, 1), h))
    assert r.value == pytest.approx(hand, rel=1e-12)


def test_configurations_are_merged():
    spec = PermutationSumSpec((0.0, 0.0), 1.0, 0.0, (1, 1), 0.5)
    assert stencil_configurations(spec) == {(0.5, 0.5): 1, (0.0, 0.5): -2, (0.0, 0.0): 1}
    r = kac_increment_moment(spec)
    assert r.n_configurations == 3 and r.n_permutations == 2


def test_exact_mode_matches_float():
    spec = PermutationSumSpec((Fraction(1, 10), Fraction(-1, 5), 0), 0.5, Fraction(1, 20), (0, 1, 2), Fraction(1, 20))
    ex = kac_increment_moment_exact(spec)
    fl = kac_increment_moment(PermutationSumSpec((0.1, -0.2, 0.0), 0.5, 0.05, (0, 1, 2), 0.05))
    assert ex.value == pytest.approx(fl.value, rel=1e-12, abs=1e-15)
    assert float(ex.exact.evaluate()) == pytest.approx(ex.value, rel=1e-14, abs=1e-16)
    assert kac_moment_exact(PermutationSumSpec((0, 0), 0.5)).exact.terms == ((Fraction(0), 2),)
    with pytest.raises(ValueError):
        kac_moment_exact(PermutationSumSpec((0,), 1.0))


def test_batch_matches_scalar():
    rng = np.random.default_rng(1)
    pts = rng.uniform(-1, 1, size=(5, 3))
    got = kac_moment_many(pts, 1.5, 0.1, (1, 0, 2), 0.05)
    want = [kac_increment_moment(PermutationSumSpec(tuple(p), 1.5, 0.1, (1, 0, 2), 0.05)).value for p in pts]
    assert np.allclose(got, want, rtol=1e-12)


def test_monte_carlo_local_time_at_origin():
    # E L^0 at an exponential(1/2) time is u^{1/2}(0) = 1
    grid = GridSpec.centered(0.0, 12.0, 0.01)
    vals = []
    for i in range(3000):
        p, _ = simulate_killed_path(0.5, 1e-4, 0.0, path_seed(3, 0, i))
        vals.append(local_time_field(p, grid).at(0.0))
    se = np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(np.mean(vals) - 1.0) <= 3 * se
