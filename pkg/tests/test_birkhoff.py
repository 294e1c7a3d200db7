import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torusflow.arith import PrecisionPolicy
from torusflow.birkhoff import (CharacterSum, birkhoff_fast, birkhoff_naive, character_bound,
                                geometric_ratio, kernel_for, mean_growth_bound, orbit)
from torusflow.errors import InvalidArgument, PrecisionError


def direct_character_sum(spec, l, k, x, y, m):
    xs, ys = orbit(spec.angles, np.full(m, x), np.full(m, y), np.arange(m))
    return np.exp(2j * np.pi * (l * xs + k * ys)).sum()


def test_trivial_sums(small_spec):
    x, y = np.array([0.1, 0.6]), np.array([0.35, 0.9])
    assert np.all(birkhoff_naive(small_spec, x, y, 0) == 0)
    assert np.allclose(birkhoff_fast(small_spec, x, y, 0), 0, atol=1e-12)
    phi = small_spec.evaluate(x, y)
    assert np.allclose(birkhoff_naive(small_spec, x, y, 1), phi, rtol=0, atol=1e-15)
    assert np.allclose(birkhoff_fast(small_spec, x, y, 1), phi, rtol=1e-12)


def test_constant_ceiling(unit_spec):
    m = np.array([0, 1, 7, 1000])
    assert np.all(birkhoff_naive(unit_spec, 0.2, 0.4, m) == m)
    assert np.all(birkhoff_fast(unit_spec, 0.2, 0.4, m) == m)


def test_fast_matches_naive(small_spec, rng):
    x, y = rng.random(60), rng.random(60)
    m = rng.integers(0, 10001, 60)
    f = birkhoff_fast(small_spec, x, y, m)
    nv = birkhoff_naive(small_spec, x, y, m)
    assert np.all(np.abs(f - nv) <= 1e-9 * (1 + np.abs(nv)))


def test_cocycle(small_spec, rng):
    x, y = rng.random(200), rng.random(200)
    m, k = rng.integers(0, 5000, 200), rng.integers(0, 5000, 200)
    xm, ym = orbit(small_spec.angles, x, y, m)
    lhs = birkhoff_fast(small_spec, x, y, m + k)
    rhs = birkhoff_fast(small_spec, x, y, m) + birkhoff_fast(small_spec, xm, ym, k)
    assert np.all(np.abs(lhs - rhs) <= 1e-10 * np.abs(lhs))


def test_negative_iterates(small_spec, rng):
    x, y = rng.random(50), rng.random(50)
    m = rng.integers(1, 3000, 50)
    xb, yb = orbit(small_spec.angles, x, y, -m)
    assert np.allclose(birkhoff_fast(small_spec, x, y, -m), -birkhoff_naive(small_spec, xb, yb, m),
                       rtol=1e-10)


def test_derivative_matches_finite_difference(small_spec, rng):
    x, y = rng.random(40), rng.random(40)
    m = rng.integers(1, 2000, 40)
    h = 1e-7
    for ox, oy, dx, dy in ((1, 0, h, 0), (0, 1, 0, h)):
        d = birkhoff_fast(small_spec, x, y, m, order_x=ox, order_y=oy)
        fd = (birkhoff_fast(small_spec, x + dx, y + dy, m) - birkhoff_fast(small_spec, x - dx, y - dy, m)) / (2 * h)
        keep = np.abs(d) > 1e-2 * np.abs(d).max()
        assert np.all(np.abs(d - fd)[keep] <= 1e-4 * np.abs(d)[keep])


def test_mean_growth_bound(small_spec, rng):
    x, y = rng.random(200), rng.random(200)
    m = rng.integers(0, 10001, 200)
    dev = np.abs(birkhoff_fast(small_spec, x, y, m) - m)
    assert np.all(dev <= mean_growth_bound(small_spec, m) + 1e-9)


def test_character_bound(desk_spec, rng):
    angles = desk_spec.angles
    assert character_bound(angles, 3, -7, 1) == 1.0
    with pytest.raises(InvalidArgument):
        character_bound(angles, 0, 0, 5)
    for r in desk_spec.pair.schedule:
        assert character_bound(angles, r.q, 0, 10**7) <= r.q_next
    for _ in range(1000):
        l, k = (int(v) for v in rng.integers(-40, 41, 2))
        if l == 0 and k == 0:
            continue
        m = int(rng.integers(1, 1001))
        s = abs(direct_character_sum(desk_spec, l, k, 0.0, 0.0, m))
        assert s <= character_bound(angles, l, k, m) + 1e-9


@settings(max_examples=50)
@given(st.floats(-0.5, 0.5, allow_nan=False), st.integers(-10**4, 10**4))
def test_geometric_ratio(omega, m):
    if m >= 0:
        direct = np.exp(2j * np.pi * omega * np.arange(m)).sum()
    else:
        direct = -np.exp(2j * np.pi * omega * np.arange(m, 0)).sum()
    assert abs(geometric_ratio(omega, m) - direct) <= 1e-9 * max(1, abs(m))


def test_resonant_character_path():
    import mpmath
    ch = CharacterSum(1, 0, 1e-12, True)
    with mpmath.workdps(40):
        w = mpmath.mpf("1e-12")
        exact = complex(mpmath.fsum(mpmath.expjpi(2 * w * i) for i in range(1000)))
    assert abs(ch.ratio(1000) - exact) < 1e-12
    assert ch.bound(10) == 10


def test_precision_guard(small_spec):
    pol = PrecisionPolicy(128, 100)
    with pytest.raises(PrecisionError):
        birkhoff_fast(small_spec, 0.1, 0.2, 101, policy=pol)
    with pytest.raises(PrecisionError):
        birkhoff_naive(small_spec, 0.1, 0.2, 101, policy=pol)


def test_kernel_tolerance_positive(small_spec):
    assert 0 < kernel_for(small_spec).tolerance() < 1e-6
