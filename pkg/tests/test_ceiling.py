import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torusflow.ceiling import (CeilingSpec, LevelGeometry, TrigPolynomial, _grid_extremes, assemble_phi,
                               bump, bump_cnorm, fourier_eval, usable_levels)
from torusflow.errors import AliasingError, NonpositiveCeiling
from torusflow.pairgen import GrowthLaw, build_pair
from torusflow.towers import tower_geometry

EPS = 0.01


@pytest.fixture(scope="module")
def geoms(desk_pair):
    return {r.n: LevelGeometry(r, EPS) for r in usable_levels(desk_pair)}


def test_bump_examples():
    assert bump(-1.0) == 0.0 and bump(2.0) == 1.0 and bump(0.0) == 0.0 and bump(1.0) == 1.0
    assert bump(0.5) == pytest.approx(0.5, abs=1e-15)


def test_bump_shape():
    s = np.linspace(1e-6, 1 - 1e-6, 20001)
    v = bump(s)
    assert np.all(np.diff(v) >= 0)
    inner = bump(np.linspace(0.05, 0.95, 20001))
    assert np.all(np.diff(inner) > 0)
    assert np.allclose(v + bump(1 - s), 1.0, atol=1e-15)
    # flat to all orders at the ends: mpmath derivatives vanish as s -> 0+
    with mpmath.workdps(30):
        f = lambda t: 1 / (1 + mpmath.exp(1 / (1 - t) - 1 / t))
        for p in (1, 2, 3):
            assert abs(mpmath.diff(f, mpmath.mpf("0.01"), p)) < 1e-30


def test_bump_norms_finite():
    norms = [bump_cnorm(p) for p in range(4)]
    assert norms[0] == 1.0 and all(0 < v < math.inf for v in norms)


def test_kappa(geoms):
    for n, g in geoms.items():
        r = g.rec
        ys = np.linspace(0, r.q / r.q_prime, 50)
        assert np.all(g.kappa(ys) == 0.0)
        for i in range(1, g.i_max + 1):
            y = (i + 0.5) * r.q / r.q_prime
            assert g.kappa(y) == i * EPS
        top = np.linspace((1 - 1 / n) / r.q_prime_prev, 1 / r.q_prime_prev, 50, endpoint=False)
        assert np.all(np.abs(g.kappa(top)) < 1e-300)
        grid = np.linspace(0, 1, 20001)
        k = g.kappa(grid)
        assert k.min() >= 0 and k.max() <= g.r * EPS + 1e-15


def test_window(geoms, desk_pair):
    for n, g in geoms.items():
        tw = tower_geometry(desk_pair, n)
        cx, cy = tw.Rbar(0).center()
        assert g.window(cx, cy, 0) == pytest.approx(1.0, abs=1e-15)
        assert g.window(0.0, cy, 0) == 0.0
        cx1, cy1 = tw.Rbar(1).center()
        assert g.window(cx1, cy1, 0) == 0.0


def test_xtilde_bounds(geoms):
    u = (np.arange(64) + 0.5) / 64
    X, Y = np.meshgrid(u, u, indexing="ij")
    for g in geoms.values():
        v = g.xtilde(X.ravel(), Y.ravel())
        assert v.min() >= 0 and v.max() <= g.r * EPS
        assert np.all(g.xtilde(np.zeros(10), np.linspace(0, 1, 10)) == 0.0)


def test_ytilde(geoms):
    for n, g in geoms.items():
        r = g.rec
        amp = math.exp(-r.q)
        ys = np.linspace(0, (1 - 1 / n) / r.q_prime_prev, 100)
        assert np.all(g.ytilde(np.full(100, 0.3), ys) == 0.0)
        u0 = 0.5 * ((1 - 1 / n + 1 / n**3) + (1 - 1 / n**2))
        assert g.ytilde(0.0, u0 / r.q_prime_prev) == pytest.approx(-amp, rel=1e-15)
        rng = np.random.default_rng(n)
        assert np.abs(g.ytilde(rng.random(5000), rng.random(5000))).max() <= amp


def test_ytilde_vanishes_on_undrifted_rbar(geoms, desk_pair):
    """Y-tilde is zero on Rbar^0 and on every Rbar^j whose y-drift is still inside its zero set."""
    for n, g in geoms.items():
        tw = tower_geometry(desk_pair, n)
        r = g.rec
        u = np.linspace(0, 1, 9)
        for j in range(tw.period_count):
            R = tw.Rbar(j)
            top = (R.y0 + R.wy) * r.q_prime_prev % 1
            if j and not (0 < top <= Fraction(n - 1, n)):
                continue
            X, Y = np.meshgrid(float(R.x0) + u * float(R.wx), float(R.y0) + u * float(R.wy))
            assert np.abs(g.ytilde(X.ravel() % 1, Y.ravel() % 1)).max() <= 1e-15


@pytest.mark.parametrize("r_order,p_order", [(0, 1), (1, 0), (1, 1), (0, 2), (2, 0)])
def test_ytilde_derivative_norms(geoms, r_order, p_order):
    g = geoms[3]
    rec = g.rec
    scale = g.n**3 * rec.q_prime_prev
    predicted = bump_cnorm(p_order) * (2 * math.pi) ** r_order * scale**p_order * rec.q**r_order * math.exp(-rec.q)
    # x-part is a pure cosine: sup of its r-th derivative is (2 pi q)^r exactly
    h = 1e-4 / scale
    y = np.linspace(0, 1 / rec.q_prime_prev, 400001)
    f = g.phitilde(y)
    d = f
    for _ in range(p_order):
        d = np.gradient(d, y[1] - y[0])
    sup = np.abs(d).max() * (2 * math.pi * rec.q) ** r_order * math.exp(-rec.q)
    assert sup == pytest.approx(predicted, rel=0.05)
    assert h > 0


def test_truncate_x(geoms):
    g = geoms[3]
    P = g.truncate_x((32, 64), g.default_exponents(32, 64))
    assert P.coefficient(0, g.rec.q_prime) == 0
    c00 = P.coefficient(0, 0)
    ex, ey = g.default_exponents(32, 64)
    xs = np.arange(2**ex) / 2**ex
    ys = np.arange(2**ey) / 2**ey
    mean = np.mean([g.xtilde(np.full(ys.size, x), ys).mean() for x in xs])
    assert abs(c00.imag) < 1e-15 and c00.real == pytest.approx(mean, abs=1e-10)
    with pytest.raises(AliasingError):
        g.truncate_x((32, 64), (6, 7))


def test_truncate_y(geoms):
    for g in geoms.values():
        rec = g.rec
        P = g.truncate_y()
        assert set(np.abs(P.ls)) == {rec.q}
        assert P.coefficient(0, 0) == 0 and P.coefficient(0, rec.q_prime_prev) == 0
        with mpmath.workdps(20):
            phi0 = float(mpmath.quad(lambda t: g.phitilde(float(t) / rec.q_prime_prev),
                                     [0, 1 - 1 / g.n, 1 - 1 / g.n + 1 / g.n**3, 1 - 1 / g.n**2,
                                      1 - 1 / g.n**2 + 1 / g.n**3, 1]))
        assert 0 <= phi0 <= 1
        assert P.coefficient(rec.q, 0).real == pytest.approx(-phi0 / (2 * math.exp(rec.q)), rel=1e-9)


def test_truncate_y_tail(geoms):
    g = geoms[3]
    rec = g.rec
    P = g.truncate_y()
    rng = np.random.default_rng(3)
    x, y = rng.random(4000), rng.random(4000)
    err = np.abs(P.evaluate(x, y) - g.ytilde(x, y)).max()
    c4 = bump_cnorm(4) * (g.n**3 * rec.q_prime_prev) ** 4 / (2 * math.pi) ** 4
    tail = 2 * sum(j**-4.0 for j in range(rec.q_prime, 10**6))
    assert err <= c4 * tail * math.exp(-rec.q)


def test_hermitian_evaluation(desk_spec):
    rng = np.random.default_rng(5)
    x, y = rng.random(3000), rng.random(3000)
    for t in desk_spec.terms:
        v = t.evaluate(x, y, complex_out=True)
        assert np.abs(v.imag).max() <= 1e-12 * t.abs_sum()


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31))
def test_fourier_paths_agree(rx, ry, seed):
    rng = np.random.default_rng(seed)
    ls, ks = np.arange(-rx, rx + 1), np.arange(-ry, ry + 1)
    c = rng.normal(size=(ls.size, ks.size)) + 1j * rng.normal(size=(ls.size, ks.size))
    x, y = rng.random(50), rng.random(50)
    dense = np.einsum("ab,ia,ib->i", c, np.exp(2j * np.pi * np.outer(x, ls)), np.exp(2j * np.pi * np.outer(y, ks)))
    import torusflow.ceiling as C
    old = C.DENSE_WORK
    try:
        C.DENSE_WORK = 0
        fast = fourier_eval(ls, ks, c, x, y)
    finally:
        C.DENSE_WORK = old
    assert np.abs(fast - dense).max() <= 1e-10 * np.abs(c).sum()


def test_grid_extremes_match_dense_grid(geoms):
    g = geoms[3]
    terms = [g.truncate_x((16, 32), g.default_exponents(16, 32)), g.truncate_y()]
    nx, ny = 128, 256
    full = 0.5 + sum(t.on_grid(nx, ny) for t in terms)
    lo, hi = _grid_extremes(terms, 0.5, nx, ny)[:2]
    assert lo == pytest.approx(full.min(), abs=1e-12) and hi == pytest.approx(full.max(), abs=1e-12)


def test_zero_levels_is_constant(unit_spec):
    assert unit_spec.levels == [] and unit_spec.min_value == 1.0 == unit_spec.max_value
    assert unit_spec.evaluate(np.array([0.1, 0.7]), np.array([0.3, 0.2])).tolist() == [1.0, 1.0]


def test_small_assembly(small_pair, tmp_path):
    spec = assemble_phi(small_pair, radii=[(32, 64)])
    assert spec.mean_exact() == 1
    assert spec.min_value > 0
    rng = np.random.default_rng(0)
    x, y = rng.random(20000), rng.random(20000)
    v = spec.evaluate(x, y)
    assert v.min() >= spec.min_value and v.max() <= spec.max_value
    spec.save(tmp_path)
    back = CeilingSpec.load(tmp_path, small_pair)
    assert back.as_dict() == spec.as_dict()
    assert np.array_equal(back.evaluate(x[:100], y[:100]), spec.evaluate(x[:100], y[:100]))
    with pytest.raises(NonpositiveCeiling):
        assemble_phi(small_pair, staircase_scale=1e3, radii=[(32, 64)])


def test_desk_ceiling(desk_spec):
    assert desk_spec.mean_exact() == 1
    assert [g.n for g in desk_spec.levels] == [3, 5]
    assert desk_spec.min_value >= 0.5
    assert sum(g.r * g.eps for g in desk_spec.levels) <= 0.4 + 1e-12
    for g in desk_spec.levels:
        assert g.eps == pytest.approx(desk_spec.staircase_scale * g.rec.q_prime_prev**7 / g.rec.q_prime, rel=1e-15)
