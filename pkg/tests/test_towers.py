from fractions import Fraction

import numpy as np
import pytest

from torusflow.errors import InvalidArgument
from torusflow.towers import (Rect, check_tiling, level_rect, monochromaticity, monochromaticity_mc,
                              rank_one_defect, rbar_containment, shifted_level_in_D, sums_on_base,
                              tower_geometry)

F = Fraction


@pytest.mark.parametrize("n", [3, 5])
def test_rotation_family_tiles(desk_pair, n):
    tw = tower_geometry(desk_pair, n)
    rep = check_tiling(tw.R_family())
    assert rep.count == tw.q * tw.q_prime_prev
    assert rep.total_area == 1 and rep.passed


@pytest.mark.parametrize("n", [3, 5])
def test_rbar_inside_rotation_cells(desk_pair, n):
    assert rbar_containment(tower_geometry(desk_pair, n)) == []


def test_levels_are_disjoint(desk_pair):
    tw = tower_geometry(desk_pair, 3)
    rep = check_tiling(tw.levels())
    assert rep.overlaps == []
    assert tw.h == 6


def test_level_area_bound(desk_pair):
    tw = tower_geometry(desk_pair, 5)
    n = tw.n
    cover = (tw.h + 1) * tw.base.area
    assert cover <= 1
    # h = floor((n-2) r / n) q q'_{n-1}, each level has area ((n-2)/n)^2 / q'
    expect = F((n - 2) * tw.r // n * tw.q * tw.q_prime_prev + 1) * F(n - 2, n) ** 2 / tw.q_prime
    assert cover == expect
    assert float(tw.h * tw.base.area) > 0.166


def test_beta_is_increasing_and_small(desk_pair):
    tw = tower_geometry(desk_pair, 5)
    b = [tw.beta(j) for j in range(tw.period_count)]
    assert all(u < v for u, v in zip(b, b[1:]))
    assert b[-1] <= F(tw.q, tw.q_prime)


def test_shifted_levels_land_in_D(desk_pair):
    tw = tower_geometry(desk_pair, 3)
    assert all(shifted_level_in_D(tw, p) for p in range(tw.h + 1))


def test_level_rect_bounds(desk_pair):
    tw = tower_geometry(desk_pair, 3)
    assert level_rect(tw, 0) == tw.base
    with pytest.raises(InvalidArgument):
        level_rect(tw, tw.h + 1)
    with pytest.raises(InvalidArgument):
        level_rect(tw, -1)


def test_monochromaticity_exact_examples():
    halves = [Rect(F(0), F(1, 2), F(0), F(1)), Rect(F(1, 2), F(1, 2), F(0), F(1))]
    inside = Rect(F(1, 8), F(1, 4), F(1, 8), F(1, 4))
    straddle = Rect(F(3, 8), F(1, 4), F(0), F(1, 2))
    rep = monochromaticity([inside, straddle], halves)
    assert rep.fractions.tolist() == [1.0, 0.5]
    assert rep.level_ok(0.1).tolist() == [True, False]
    assert not rep.is_monochromatic(0.1)
    assert rep.is_monochromatic(0.6)


def test_monochromaticity_needs_disjoint_atoms():
    with pytest.raises(InvalidArgument):
        monochromaticity([Rect(F(0), F(1, 4), F(0), F(1, 4))],
                         [Rect(F(0), F(1, 2), F(0), F(1)), Rect(F(1, 4), F(1, 2), F(0), F(1))])


def test_monochromaticity_mc_matches_exact(rng):
    atoms = [Rect(F(k, 3), F(1, 3), F(0), F(1)) for k in range(3)]
    levels = [Rect(F(int(a), 100), F(1, 5), F(1, 10), F(1, 5)) for a in rng.integers(0, 100, 8)]
    exact = monochromaticity(levels, atoms)
    mc = monochromaticity_mc(levels, atoms, samples=4000, seed=1)
    assert np.all(np.abs(mc.fractions - exact.fractions) <= 4 * mc.stderr + 1e-12)


def test_constant_ceiling_has_no_defect(small_spec):
    flat = small_spec.without_level(3)
    rep = rank_one_defect(flat, 3, grid=6)
    assert rep.defect <= 1e-12
    assert rep.spread.shape == (tower_geometry(flat.pair, 3).h + 1,)


def test_defect_is_subadditive(desk_spec):
    tw = tower_geometry(desk_spec.pair, 3)
    ms = np.arange(tw.h + 1)
    full = sums_on_base(desk_spec, tw, ms, grid=6)
    rest = sums_on_base(desk_spec.without_level(3), tw, ms, grid=6)
    spread = np.ptp(full, axis=1)
    assert np.all(spread <= np.ptp(rest, axis=1) + np.ptp(full - rest, axis=1) + 1e-12)


def test_defect_upper_bracket(small_spec):
    rep = rank_one_defect(small_spec, 3, grid=5)
    fine = rank_one_defect(small_spec, 3, grid=17)
    assert rep.defect <= rep.upper
    assert fine.defect <= rep.upper + 1e-12


def test_staircase_pullback_is_locally_constant(small_spec):
    g = small_spec.level(3)
    tw = tower_geometry(small_spec.pair, 3)
    # kappa is flat on the interior of each staircase step, below the cutoff band
    top = float(F(tw.n - 2, tw.n * tw.q_prime_prev)) - 1e-9
    for i in range(tw.i_max + 1):
        lo = float(F(i * tw.q, tw.q_prime) + F(tw.q, tw.n**2 * tw.q_prime)) + 1e-9
        hi = float(F((i + 1) * tw.q, tw.q_prime) - F(tw.q, tw.n**2 * tw.q_prime)) - 1e-9
        hi = min(hi, top)
        if hi <= lo:
            continue
        ys = np.linspace(lo, hi, 50)
        vals = g.kappa(ys)
        assert np.ptp(vals) <= 1e-12 * max(1.0, np.abs(vals).max())
