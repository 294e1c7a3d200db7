from fractions import Fraction

import numpy as np
import pytest

from torusflow.analysis import box_measure, sample_mu
from torusflow.arith import PrecisionPolicy
from torusflow.birkhoff import birkhoff_naive
from torusflow.errors import InvalidArgument, PrecisionError
from torusflow.flow import FlowPoint, flow, flow_map, time_index
from torusflow.towers import Box, Rect


def random_points(spec, rng, count):
    x, y = rng.random(count), rng.random(count)
    return FlowPoint(x, y, rng.random(count) * spec.evaluate(x, y))


def test_short_times_stay_on_fiber(small_spec, rng):
    p = random_points(small_spec, rng, 200)
    phi = small_spec.evaluate(p.x, p.y)
    t = 0.5 * (phi - p.s)
    q, m = flow(small_spec, p, t)
    assert np.all(m == 0)
    assert np.array_equal(q.x, p.x) and np.allclose(q.s, p.s + t, atol=1e-12)


def test_unit_ceiling_index(unit_spec):
    assert time_index(unit_spec, FlowPoint(0.3, 0.6, 0.0), 7.3) == 7


def test_identity_is_exact(small_spec, rng):
    p = random_points(small_spec, rng, 50)
    q = flow_map(small_spec, p, 0.0)
    assert np.array_equal(q.x, p.x) and np.array_equal(q.y, p.y) and np.array_equal(q.s, p.s)


def test_bracket_against_naive_sums(small_spec, rng):
    p = random_points(small_spec, rng, 40)
    t = rng.random(40) * 1000
    q, m = flow(small_spec, p, t)
    lo = birkhoff_naive(small_spec, p.x, p.y, m)
    hi = birkhoff_naive(small_spec, p.x, p.y, m + 1)
    g = p.s + t
    assert np.all(lo <= g + 1e-9) and np.all(g < hi + 1e-9)
    assert np.allclose(q.s, g - lo, atol=1e-8)
    q.check(small_spec, tol=1e-9)


def test_semigroup(small_spec, rng):
    p = random_points(small_spec, rng, 300)
    t, u = rng.random(300) * 500, rng.random(300) * 500
    a, ma = flow(small_spec, p, t)
    b, mb = flow(small_spec, a, u)
    c, mc = flow(small_spec, p, t + u)
    assert np.array_equal(ma + mb, mc)
    assert np.abs(b.s - c.s).max() <= 1e-8


def test_monotone_in_time(small_spec, rng):
    p = random_points(small_spec, rng, 30)
    ts = np.linspace(0, 300, 25)
    ms = np.array([time_index(small_spec, p, t) for t in ts])
    assert np.all(np.diff(ms, axis=0) >= 0)


def test_negative_time_round_trip(small_spec, rng):
    p = random_points(small_spec, rng, 100)
    t = rng.random(100) * 400
    back, mb = flow(small_spec, p, -t)
    assert np.all(mb <= 0)
    fwd, _ = flow(small_spec, back, t)
    assert np.abs(fwd.s - p.s).max() <= 1e-8
    d = np.abs(np.mod(fwd.x - p.x + 0.5, 1.0) - 0.5)
    assert d.max() <= 1e-12


def test_measure_preservation(small_spec):
    box = Box(Rect(Fraction(1, 10), Fraction(3, 10), Fraction(1, 5), Fraction(2, 5)), 0.0, 0.5)
    mu = box_measure(small_spec, box)
    p = sample_mu(small_spec, 20000, seed=3)
    for t in (17.0, 100.0):
        q, _ = flow(small_spec, p, t)
        frac = box.contains(q.x, q.y, q.s).mean()
        se = np.sqrt(mu * (1 - mu) / p.size)
        assert abs(frac - mu) <= 3 * se


def test_precision_limits(small_spec):
    with pytest.raises(PrecisionError):
        flow(small_spec, FlowPoint(0.1, 0.2, 0.0), 1e5, policy=PrecisionPolicy(256, 1000))


def test_fiber_check(small_spec):
    with pytest.raises(InvalidArgument):
        FlowPoint(0.1, 0.2, 5.0).check(small_spec)
