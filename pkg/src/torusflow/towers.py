"""Exact tower geometry for the translation and the rank-one checks.

Rectangles live on the torus with exact rational corners. For level n, with
N = q_n q'_{n-1}:

    R^j     = (j p/q, j p'/q') + [0, 1/q) x [0, 1/q'_{n-1})       (rational rotation)
    B^0     = [1/(nq), (1-1/n)/q] x [q/(nq'), (1-1/n) q/q']         (tower base)
    B^h     = B^0 + h (alpha, alpha')
    D^{iN}  = [1/(n^2 q), (1-1/n^2)/q] x [i q/q' + q/(n^2 q'), (i+1) q/q' - q/(n^2 q')]
    D^{j+iN} = D^{iN} + j (p/q, p'/q'_{n-1})
    Rbar^0  = [1/(nq), (1-1/n)/q] x [0, (1-1/n)/q'_{n-1}],  Rbar^j = Rbar^0 + j (alpha, alpha')

Here alpha and alpha' are the exact rationals carried by the pair, so every
containment and disjointness check below is exact.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .birkhoff import birkhoff_fast
from .ceiling import CeilingSpec
from .errors import InvalidArgument, InvalidSchedule
from .pairgen import YPair


def _frac01(v: Fraction) -> Fraction:
    return v - math.floor(v)


def _pieces(start: Fraction, width: Fraction) -> list[tuple[Fraction, Fraction]]:
    """[start, start+width) on the circle as at most two intervals inside [0, 1]."""
    end = start + width
    if end <= 1:
        return [(start, end)]
    return [(start, Fraction(1)), (Fraction(0), end - 1)]


@dataclass(frozen=True)
class Rect:
    """x in x0 + [0, wx], y in y0 + [0, wy] on the torus (x0, y0 taken mod 1)."""

    x0: Fraction
    wx: Fraction
    y0: Fraction
    wy: Fraction

    def __post_init__(self):
        if not (0 < self.wx <= 1 and 0 < self.wy <= 1):
            raise InvalidArgument("rectangle widths must lie in (0, 1]")
        object.__setattr__(self, "x0", _frac01(Fraction(self.x0)))
        object.__setattr__(self, "y0", _frac01(Fraction(self.y0)))

    @classmethod
    def from_bounds(cls, x0, x1, y0, y1) -> "Rect":
        return cls(Fraction(x0), Fraction(x1) - Fraction(x0), Fraction(y0), Fraction(y1) - Fraction(y0))

    @property
    def area(self) -> Fraction:
        return self.wx * self.wy

    def pieces(self) -> list[tuple[Fraction, Fraction, Fraction, Fraction]]:
        return [(a, b, c, d) for a, b in _pieces(self.x0, self.wx) for c, d in _pieces(self.y0, self.wy)]

    def translate(self, dx, dy) -> "Rect":
        return Rect(self.x0 + Fraction(dx), self.wx, self.y0 + Fraction(dy), self.wy)

    def center(self) -> tuple[float, float]:
        return float(_frac01(self.x0 + self.wx / 2)), float(_frac01(self.y0 + self.wy / 2))

    def intersection_area(self, other: "Rect") -> Fraction:
        total = Fraction(0)
        for a0, a1, b0, b1 in self.pieces():
            for c0, c1, d0, d1 in other.pieces():
                w = min(a1, c1) - max(a0, c0)
                h = min(b1, d1) - max(b0, d0)
                if w > 0 and h > 0:
                    total += w * h
        return total

    def contains(self, other: "Rect") -> bool:
        return self.intersection_area(other) == other.area

    def sample(self, rng: np.random.Generator, count: int, margin: float = 0.0):
        """Uniform points, optionally shrunk by a relative margin on each side."""
        u = margin + (1 - 2 * margin) * rng.random(count)
        v = margin + (1 - 2 * margin) * rng.random(count)
        return (np.mod(float(self.x0) + u * float(self.wx), 1.0),
                np.mod(float(self.y0) + v * float(self.wy), 1.0))

    def interior_points(self, k: int = 3) -> list[tuple[Fraction, Fraction]]:
        """A k-by-k lattice of exact interior points."""
        return [(_frac01(self.x0 + self.wx * Fraction(2 * a + 1, 2 * k)),
                 _frac01(self.y0 + self.wy * Fraction(2 * b + 1, 2 * k)))
                for a in range(k) for b in range(k)]


def overlap_pairs(rects: Sequence[Rect], limit: int = 1) -> list[tuple[int, int]]:
    """Pairs of rectangles sharing positive area, by a sweep over x.

    Stops after `limit` pairs. Rectangles touching along an edge do not count.
    """
    events = []
    for idx, r in enumerate(rects):
        for a0, a1, b0, b1 in r.pieces():
            events.append((a1, 0, idx, b0, b1))   # removals sort before insertions at equal x
            events.append((a0, 1, idx, b0, b1))
    events.sort(key=lambda e: (e[0], e[1]))
    starts: list[tuple[Fraction, Fraction, int]] = []   # active (b0, b1, idx), sorted by b0
    found = []
    for x, kind, idx, b0, b1 in events:
        key = (b0, b1, idx)
        if kind == 0:
            pos = bisect.bisect_left(starts, key)
            if pos < len(starts) and starts[pos] == key:
                starts.pop(pos)
            continue
        pos = bisect.bisect_left(starts, key)
        # with pairwise disjoint active intervals, only the neighbours can overlap
        for nb in (pos - 1, pos):
            if 0 <= nb < len(starts):
                c0, c1, other = starts[nb]
                if min(b1, c1) - max(b0, c0) > 0 and other != idx:
                    found.append((min(idx, other), max(idx, other)))
                    if len(found) >= limit:
                        return found
        starts.insert(pos, key)
    return found


@dataclass(frozen=True)
class TilingReport:
    count: int
    total_area: Fraction
    overlaps: list[tuple[int, int]]

    @property
    def passed(self) -> bool:
        return self.total_area == 1 and not self.overlaps


def check_tiling(rects: Sequence[Rect]) -> TilingReport:
    return TilingReport(len(rects), sum((r.area for r in rects), Fraction(0)), overlap_pairs(rects))


@dataclass(frozen=True)
class TowerSpec:
    n: int
    q: int
    p: int
    q_prime: int
    q_prime_prev: int
    p_prime_prev: int
    r: int
    h: int
    base: Rect
    alpha: Fraction
    alpha_prime: Fraction

    @property
    def period_count(self) -> int:
        return self.q * self.q_prime_prev

    @property
    def i_max(self) -> int:
        return math.floor(Fraction(self.n - 2, self.n) * self.r)

    def beta(self, j: int) -> Fraction:
        return Fraction(j, self.q_prime_prev * self.q_prime)

    def split(self, p: int) -> tuple[int, int]:
        """(j, i) with p = j + i q q'_{n-1}."""
        return p % self.period_count, p // self.period_count

    def R(self, j: int) -> Rect:
        return Rect(Fraction(j * self.p, self.q), Fraction(1, self.q),
                    Fraction(j * self.p_prime_prev, self.q_prime_prev), Fraction(1, self.q_prime_prev))

    def R_family(self) -> list[Rect]:
        return [self.R(j) for j in range(self.period_count)]

    def D(self, p: int) -> Rect:
        j, i = self.split(p)
        n2, q, qp = self.n**2, self.q, self.q_prime
        base = Rect.from_bounds(Fraction(1, n2 * q), Fraction(n2 - 1, n2 * q),
                                Fraction(i * q, qp) + Fraction(q, n2 * qp),
                                Fraction((i + 1) * q, qp) - Fraction(q, n2 * qp))
        return base.translate(Fraction(j * self.p, q), Fraction(j * self.p_prime_prev, self.q_prime_prev))

    def Rbar(self, j: int) -> Rect:
        n, q = self.n, self.q
        base = Rect.from_bounds(Fraction(1, n * q), Fraction(n - 1, n * q),
                                0, Fraction(n - 1, n * self.q_prime_prev))
        return base.translate(j * self.alpha, j * self.alpha_prime)

    def level(self, h: int) -> Rect:
        if not 0 <= h <= self.h:
            raise InvalidArgument(f"level {h} outside 0..{self.h}")
        return self.base.translate(h * self.alpha, h * self.alpha_prime)

    def levels(self) -> list[Rect]:
        return [self.level(h) for h in range(self.h + 1)]


def tower_geometry(pair: YPair, n: int) -> TowerSpec:
    rec = pair.record(n)
    if math.gcd(rec.q, rec.q_prime_prev) != 1:
        raise InvalidSchedule(f"gcd(q_{n}, q'_{n - 1}) != 1")
    if n < 2:
        raise InvalidArgument("towers need n >= 2")
    r = rec.q_prime // (rec.q * rec.q_prime_prev) - 1
    h = math.floor(Fraction(n - 2, n) * r) * rec.q * rec.q_prime_prev
    base = Rect.from_bounds(Fraction(1, n * rec.q), Fraction(n - 1, n * rec.q),
                            Fraction(rec.q, n * rec.q_prime), Fraction((n - 1) * rec.q, n * rec.q_prime))
    return TowerSpec(n, rec.q, rec.p, rec.q_prime, rec.q_prime_prev, rec.p_prime_prev, r, h, base,
                     pair.alpha_exact, pair.alpha_prime_exact)


def level_rect(spec: TowerSpec, h: int) -> Rect:
    return spec.level(h)


def rbar_containment(spec: TowerSpec) -> list[int]:
    """Indices j with Rbar^j not inside R^j (empty when the containment holds)."""
    return [j for j in range(spec.period_count) if not spec.R(j).contains(spec.Rbar(j))]


def shifted_level_in_D(spec: TowerSpec, p: int) -> bool:
    """Is B^p, translated by -beta_j in y, inside D^p?"""
    j, _ = spec.split(p)
    return spec.D(p).contains(spec.level(p).translate(0, -spec.beta(j)))


# rank-one defect

@dataclass(frozen=True)
class DefectReport:
    n: int
    h: int
    defect: float
    argmax_m: int
    upper: float
    spread: np.ndarray

    def as_row(self) -> dict:
        return {"n": self.n, "h": self.h, "defect": self.defect, "argmax_m": self.argmax_m,
                "upper_bracket": self.upper}


def base_grid(tower: TowerSpec, grid: int) -> tuple[np.ndarray, np.ndarray]:
    """grid x grid points of B^0 including its corners."""
    b = tower.base
    xs = float(b.x0) + np.linspace(0.0, 1.0, grid) * float(b.wx)
    ys = float(b.y0) + np.linspace(0.0, 1.0, grid) * float(b.wy)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return X.ravel(), Y.ravel()


def sums_on_base(spec: CeilingSpec, tower: TowerSpec, ms, grid: int = 8, order_x: int = 0, order_y: int = 0):
    """S_m phi (or a derivative) on the base grid, shape (len(ms), grid*grid)."""
    X, Y = base_grid(tower, grid)
    ms = np.asarray(ms, dtype=np.int64)
    vals = birkhoff_fast(spec, np.tile(X, ms.size), np.tile(Y, ms.size), np.repeat(ms, X.size),
                         order_x, order_y)
    return np.asarray(vals).reshape(ms.size, X.size)


def rank_one_defect(spec: CeilingSpec, n: int, grid: int = 8, ms=None) -> DefectReport:
    """max over m <= h_n of the spread of S_m phi over a grid of B^0.

    The grid value bounds the true supremum from below. `upper` adds the
    first-order term: every point of B^0 is within half a cell of a node, so
    two points differ by at most the node spread plus one cell times the
    largest node slope, doubled for safety.
    """
    if grid < 2:
        raise InvalidArgument("grid must be >= 2")
    tower = tower_geometry(spec.pair, n)
    ms = np.arange(tower.h + 1) if ms is None else np.asarray(ms, dtype=np.int64)
    s = sums_on_base(spec, tower, ms, grid)
    spread = s.max(axis=1) - s.min(axis=1)
    k = int(np.argmax(spread))
    gx = np.abs(sums_on_base(spec, tower, ms, grid, order_x=1)).max(axis=1)
    gy = np.abs(sums_on_base(spec, tower, ms, grid, order_y=1)).max(axis=1)
    dx = float(tower.base.wx) / (grid - 1)
    dy = float(tower.base.wy) / (grid - 1)
    upper = float(np.max(spread + 2.0 * (gx * dx + gy * dy)))
    return DefectReport(n, tower.h, float(spread[k]), int(ms[k]), upper, spread)


@dataclass(frozen=True)
class SeparationReport:
    """Whether some H satisfies S_{h_n - 1} phi < H < S_{h_n} phi on all of B^0 (grid estimate)."""

    n: int
    top_prev: float
    bottom_last: float

    @property
    def exists(self) -> bool:
        return self.top_prev < self.bottom_last

    @property
    def H(self) -> float | None:
        return 0.5 * (self.top_prev + self.bottom_last) if self.exists else None


def height_separation(spec: CeilingSpec, n: int, grid: int = 8) -> SeparationReport:
    tower = tower_geometry(spec.pair, n)
    s = sums_on_base(spec, tower, [tower.h - 1, tower.h], grid)
    return SeparationReport(n, float(s[0].max()), float(s[1].min()))


# monochromaticity

@dataclass(frozen=True)
class MonochromaticityReport:
    fractions: np.ndarray
    stderr: np.ndarray | None = None

    def level_ok(self, eps: float) -> np.ndarray:
        return 1.0 - self.fractions < eps

    def is_monochromatic(self, eps: float) -> bool:
        """Fewer than eps * (number of levels) levels fail to be eps-monochromatic."""
        bad = int(np.count_nonzero(~self.level_ok(eps)))
        return bad < eps * self.fractions.size


def monochromaticity(levels: Sequence[Rect], partition: Sequence[Rect]) -> MonochromaticityReport:
    """For each level, the largest share of its area inside one atom (exact)."""
    overlaps = overlap_pairs(partition)
    if overlaps:
        raise InvalidArgument(f"partition atoms {overlaps[0]} overlap")
    fr = []
    for lv in levels:
        best = max((lv.intersection_area(a) for a in partition), default=Fraction(0))
        fr.append(float(best / lv.area))
    return MonochromaticityReport(np.array(fr))


def _atom_of(partition: Sequence[Rect], x, y) -> np.ndarray:
    atom = np.full(np.size(x), -1)
    for k, a in enumerate(partition):
        for a0, a1, b0, b1 in a.pieces():
            inside = (x >= float(a0)) & (x < float(a1)) & (y >= float(b0)) & (y < float(b1))
            atom = np.where((atom < 0) & inside, k, atom)
    return atom


def _best_share(atom: np.ndarray, count: int) -> tuple[float, float]:
    if atom.size == 0:
        return 0.0, 0.0
    counts = np.bincount(atom[atom >= 0], minlength=count)
    p = counts.max() / atom.size if counts.size else 0.0
    return float(p), float(math.sqrt(max(p * (1 - p), 1e-300) / atom.size))


def monochromaticity_mc(levels: Sequence[Rect], partition: Sequence[Rect], samples: int,
                        seed: int = 0) -> MonochromaticityReport:
    """Monte-Carlo version of `monochromaticity`, with binomial standard errors."""
    fr, se = [], []
    for k, lv in enumerate(levels):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
        x, y = lv.sample(rng, samples)
        p, e = _best_share(_atom_of(partition, x, y), len(partition))
        fr.append(p)
        se.append(e)
    return MonochromaticityReport(np.array(fr), np.array(se))


@dataclass(frozen=True)
class Box:
    """A box of the flow space: a torus rectangle times a fiber interval [s0, s1)."""

    rect: Rect
    s0: float
    s1: float

    def contains(self, x, y, s) -> np.ndarray:
        return (_atom_of([self.rect], x, y) == 0) & (s >= self.s0) & (s < self.s1)


def flow_level_monochromaticity(spec: CeilingSpec, base: Rect, times: Sequence[float],
                                partition: Sequence[Box], samples: int, seed: int = 0,
                                s_range: tuple[float, float] = (0.0, 0.0)) -> MonochromaticityReport:
    """Share of the horizontal flow level T^t (base x [s0, s1]) inside its best atom, by sampling."""
    from .flow import FlowPoint, flow

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    x, y = base.sample(rng, samples)
    s = s_range[0] + (s_range[1] - s_range[0]) * rng.random(samples)
    fr, se = [], []
    for t in times:
        pt, _ = flow(spec, FlowPoint(x, y, s), float(t))
        atom = np.full(samples, -1)
        for k, b in enumerate(partition):
            atom = np.where((atom < 0) & b.contains(pt.x, pt.y, pt.s), k, atom)
        p, e = _best_share(atom, len(partition))
        fr.append(p)
        se.append(e)
    return MonochromaticityReport(np.array(fr), np.array(se))
