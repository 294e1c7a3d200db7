"""Stretch, staircase and correlation diagnostics for the special flow."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .birkhoff import birkhoff_fast
from .ceiling import CeilingSpec
from .errors import DegenerateError, InvalidArgument
from .flow import FlowPoint, flow, time_index
from .pairgen import YPair
from .towers import Box, Rect, tower_geometry

MEASURE_TOL = 0.02


# uniform stretch

@dataclass(frozen=True)
class StretchReport:
    a: float
    b: float
    K: float
    epsilon: float
    criterion_epsilon: float | None = None
    criterion_K: float | None = None

    @property
    def criterion_ok(self) -> bool:
        return self.criterion_epsilon is not None and math.isfinite(self.criterion_epsilon)

    def passes(self, epsilon: float, K: float) -> bool:
        """Definition-side verdict for the target (epsilon, K)."""
        return self.epsilon <= epsilon and self.K >= K

    def criterion_passes(self, epsilon: float, K: float) -> bool:
        return self.criterion_ok and self.criterion_epsilon <= epsilon and self.criterion_K >= K


def sublevel_measure(g: np.ndarray, a: float, b: float, u, v) -> np.ndarray:
    """lambda{x in [a, b] : u <= g(x) <= v} for the piecewise-linear interpolant of samples g."""
    g = np.asarray(g, dtype=np.float64)
    h = (b - a) / (g.size - 1)
    lo = np.minimum(g[:-1], g[1:])[None, :]
    hi = np.maximum(g[:-1], g[1:])[None, :]
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))[:, None]
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))[:, None]
    span = hi - lo
    flat = span <= 0
    cover = np.clip(np.minimum(v, hi) - np.maximum(u, lo), 0.0, None) / np.where(flat, 1.0, span)
    cover = np.where(flat, ((lo >= u) & (lo <= v)).astype(np.float64), cover)
    return h * cover.sum(axis=1)


def measure_stretch(g, a: float, b: float, windows: int = 10) -> StretchReport:
    """Measured (epsilon, K) of the definition for sampled g on [a, b].

    K is the oscillation sup g - inf g; epsilon is the worst relative gap between
    lambda(I_{u,v}) and (v - u)(b - a)/|g(b) - g(a)| over all pairs of `windows`+1
    equally spaced levels u < v.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.size < 2 or windows < 2:
        raise InvalidArgument("need at least two samples and two windows")
    gmin, gmax = float(g.min()), float(g.max())
    K = gmax - gmin
    if K <= 0:
        raise DegenerateError("constant function: K = 0")
    rise = abs(g[-1] - g[0])
    if rise == 0:
        return StretchReport(a, b, K, math.inf)
    levels = np.linspace(gmin, gmax, windows + 1)
    iu, iv = np.triu_indices(windows + 1, k=1)
    u, v = levels[iu], levels[iv]
    lam = sublevel_measure(g, a, b, u, v)
    expected = (v - u) / rise * (b - a)
    eps = float(np.max(np.abs(lam / expected - 1.0)))
    return StretchReport(a, b, K, eps)


@dataclass(frozen=True)
class CriterionResult:
    epsilon: float
    K: float
    passed: bool


def stretch_criterion(inf_g1: float, sup_g2: float, length: float) -> CriterionResult:
    """(epsilon, K) = (sup|g''| L / inf|g'|, inf|g'| L) from the derivative test."""
    if length <= 0:
        raise InvalidArgument("interval length must be positive")
    if inf_g1 <= 0:
        return CriterionResult(math.inf, 0.0, False)
    return CriterionResult(sup_g2 * length / inf_g1, inf_g1 * length, True)


def derivative_bounds(g1: np.ndarray, g2: np.ndarray, h: float) -> tuple[float, float]:
    """Certified inf|g'| and sup|g''| from node values with spacing h.

    Between nodes |g'| can drop by at most h/2 sup|g''|; sup|g''| itself is
    padded by the largest jump of g'' between neighbouring nodes.
    """
    sup2 = float(np.max(np.abs(g2)))
    if g2.size > 1:
        sup2 += float(np.max(np.abs(np.diff(g2))))
    inf1 = float(np.min(np.abs(g1))) - 0.5 * h * sup2
    # g' must keep one sign for the bound to mean anything
    if np.any(np.sign(g1) != np.sign(g1[0])):
        inf1 = 0.0
    return max(inf1, 0.0), sup2


# Step-1 partitions

def j_set(q: int, n: int) -> list[tuple[Fraction, Fraction]]:
    """The x-intervals of J_n = {x : {q x} in [1/n, 1/2 - 1/n] u [1/2 + 1/n, 1 - 1/n]}."""
    parts = []
    for lo, hi in ((Fraction(1, n), Fraction(1, 2) - Fraction(1, n)),
                   (Fraction(1, 2) + Fraction(1, n), 1 - Fraction(1, n))):
        if hi > lo:
            parts.extend(((k + lo) / q, (k + hi) / q) for k in range(q))
    return sorted(parts)


@dataclass(frozen=True)
class StepOnePartition:
    n: int
    q: int
    length: float
    intervals: list[tuple[Fraction, Fraction]]

    @classmethod
    def build(cls, q: int, n: int, length: float) -> "StepOnePartition":
        """Cut every component of J_n into equal pieces of length in [length/2, length]."""
        if length <= 0:
            raise InvalidArgument("interval length must be positive")
        out = []
        for lo, hi in j_set(q, n):
            k = max(1, math.ceil(float(hi - lo) / length))
            out.extend((lo + (hi - lo) * Fraction(i, k), lo + (hi - lo) * Fraction(i + 1, k)) for i in range(k))
        return cls(n, q, length, out)

    def in_j(self, x) -> np.ndarray:
        f = np.mod(np.asarray(x, dtype=np.float64) * self.q, 1.0)
        n = self.n
        return ((f >= 1 / n) & (f <= 0.5 - 1 / n)) | ((f >= 0.5 + 1 / n) & (f <= 1 - 1 / n))


def y_band(q_prime_prev: int, lo: float, hi: float, count: int) -> np.ndarray:
    """`count` values of y with {q'_{n-1} y} spread over [lo, hi], one per period in turn."""
    u = lo + (hi - lo) * (np.arange(count) + 0.5) / count
    k = np.arange(count) % q_prime_prev
    return (k + u) / q_prime_prev


@dataclass(frozen=True)
class IntervalStretch:
    a: float
    b: float
    y: float
    m: int
    report: StretchReport

    def as_row(self) -> dict:
        r = self.report
        return {"a": self.a, "b": self.b, "y": self.y, "m": self.m, "K": r.K, "epsilon": r.epsilon,
                "criterion_K": r.criterion_K, "criterion_epsilon": r.criterion_epsilon}


def stretch_reports(spec: CeilingSpec, pieces: Sequence[tuple[float, float, float, int]],
                    points: int = 1001, windows: int = 10) -> list[IntervalStretch]:
    """Both stretch reports for g = S_m phi(., y) on [a, b], for every (a, b, y, m)."""
    if points < 3:
        raise InvalidArgument("need at least three sample points")
    u = np.linspace(0.0, 1.0, points)
    xs = np.concatenate([a + (b - a) * u for a, b, _, _ in pieces])
    ys = np.repeat([y for _, _, y, _ in pieces], points)
    ms = np.repeat([m for _, _, _, m in pieces], points)
    g0 = np.asarray(birkhoff_fast(spec, xs, ys, ms)).reshape(len(pieces), points)
    g1 = np.asarray(birkhoff_fast(spec, xs, ys, ms, order_x=1)).reshape(len(pieces), points)
    g2 = np.asarray(birkhoff_fast(spec, xs, ys, ms, order_x=2)).reshape(len(pieces), points)
    out = []
    for k, (a, b, y, m) in enumerate(pieces):
        h = (b - a) / (points - 1)
        inf1, sup2 = derivative_bounds(g1[k], g2[k], h)
        crit = stretch_criterion(inf1, sup2, b - a)
        try:
            rep = measure_stretch(g0[k], a, b, windows)
        except DegenerateError:
            rep = StretchReport(a, b, 0.0, math.inf)
        rep = StretchReport(a, b, rep.K, rep.epsilon,
                            crit.epsilon if crit.passed else None, crit.K if crit.passed else None)
        out.append(IntervalStretch(a, b, y, int(m), rep))
    return out


def stretch_scan(spec: CeilingSpec, n: int, t: float, length: float | None = None,
                 y_count: int = 4, eta: float | None = None, points: int = 1001,
                 K_target: float = 10.0) -> list[IntervalStretch]:
    """Stretch of S_m phi(., y) on every interval of the level-n Step-1 partition at time t.

    m is the time index at the interval midpoint (fiber height 0). With `eta`
    the sampled y are confined to 1 - m/q'_n + eta <= {q'_{n-1} y} <= 1 - eta.
    """
    rec = spec.pair.record(n)
    part = StepOnePartition.build(rec.q, n, length if length is not None else 1.0 / K_target)
    if not part.intervals:
        return []
    mids = np.array([float(a + b) / 2 for a, b in part.intervals])
    if eta is None:
        ys = (np.arange(y_count) + 0.5) / y_count
    else:
        band_lo = max(0.0, 1.0 - t / rec.q_prime + eta)
        band_hi = 1.0 - eta
        if band_hi <= band_lo:
            return []
        ys = y_band(rec.q_prime_prev, band_lo, band_hi, y_count)
    X = np.repeat(mids, ys.size)
    Y = np.tile(ys, mids.size)
    m = np.asarray(time_index(spec, FlowPoint(X, Y, 0.0 * X), float(t)))
    pieces = [(float(a), float(b), float(y), int(mm)) for (a, b), y, mm in
              zip(np.repeat(np.array(part.intervals, dtype=object), ys.size, axis=0), Y, m)]
    return stretch_reports(spec, pieces, points)


# staircase stretch

def _staircase_bounds(spec: CeilingSpec, n: int, max_gap: int | None, m_max: int | None):
    tower = tower_geometry(spec.pair, n)
    top = math.floor(Fraction(n - 4, n) * tower.r)
    gap = top if max_gap is None else max_gap
    mcap = (2 * tower.q_prime) // n**2 if m_max is None else m_max
    return tower, top, gap, mcap


def _check_staircase(tower, top, gap, mcap, m, i1, i2, j):
    if not (0 <= i1 <= i2 <= top):
        raise InvalidArgument(f"need 0 <= i1 <= i2 <= (1 - 4/n) r_n = {top}")
    if i2 - i1 > gap:
        raise InvalidArgument(f"i2 - i1 = {i2 - i1} exceeds the admissible gap {gap}")
    if not (0 <= m <= mcap):
        raise InvalidArgument(f"m = {m} outside 0..{mcap}")
    if not (0 <= j < tower.period_count):
        raise InvalidArgument("j outside 0..q_n q'_{n-1} - 1")


def staircase_deviation(spec: CeilingSpec, n: int, m: int, i1: int, i2: int, j: int,
                        z1, z2, max_gap: int | None = None, m_max: int | None = None,
                        pairwise: bool = False):
    """|S_m phi(z2) - S_m phi(z1) - (i2 - i1) m eps_n| for z1 in B^{j + i1 N}, z2 in B^{j + i2 N}.

    `z1`, `z2` are (x, y) arrays of equal length, compared elementwise, or with
    `pairwise` the largest deviation over all pairs is returned. `max_gap`
    bounds i2 - i1 and defaults to the largest admissible i2; `m_max` defaults
    to 2 q'_n / n^2. Identical point sets are summed once, exactly as the
    rank-one defect sums the base grid.
    """
    _check_staircase(*_staircase_bounds(spec, n, max_gap, m_max), m, i1, i2, j)
    eps = spec.level(n).eps
    x1, y1 = (np.atleast_1d(np.asarray(v, dtype=np.float64)) for v in z1)
    x2, y2 = (np.atleast_1d(np.asarray(v, dtype=np.float64)) for v in z2)
    if np.array_equal(x1, x2) and np.array_equal(y1, y2):
        s1 = s2 = np.asarray(birkhoff_fast(spec, x1, y1, np.repeat(np.int64(m), x1.size))).reshape(-1)
    else:
        s = np.asarray(birkhoff_fast(spec, np.concatenate([x1, x2]), np.concatenate([y1, y2]), m))
        s1, s2 = s[:x1.size], s[x1.size:]
    shift = (i2 - i1) * m * eps
    if pairwise:
        return float(max(abs(s2.max() - s1.min() - shift), abs(s2.min() - s1.max() - shift)))
    d = np.abs(s2 - s1 - shift)
    return float(d[0]) if d.size == 1 else d


@dataclass(frozen=True)
class StaircaseRow:
    m: int
    i1: int
    i2: int
    j: int
    deviation: float
    step: float

    @property
    def ratio(self) -> float:
        return self.deviation / self.step if self.step else math.inf

    def as_row(self) -> dict:
        return {"m": self.m, "i1": self.i1, "i2": self.i2, "j": self.j,
                "deviation": self.deviation, "step": self.step, "ratio": self.ratio}


def staircase_sample(spec: CeilingSpec, n: int, count: int, seed: int, max_gap: int | None = None,
                     m_max: int | None = None, m_min: int = 1) -> list[StaircaseRow]:
    """`count` random admissible (m, i1 < i2, j) with one random point per level, in one batch."""
    tower, top, gap, mcap = _staircase_bounds(spec, n, max_gap, m_max)
    if top < 1 or gap < 1:
        raise InvalidArgument("no admissible pair i1 < i2 at this level")
    if mcap < m_min:
        raise InvalidArgument("empty m window")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n,)))
    eps = spec.level(n).eps
    N = tower.period_count
    cfg, pts = [], []
    for _ in range(count):
        i1 = int(rng.integers(0, top))
        i2 = int(rng.integers(i1 + 1, min(top, i1 + gap) + 1))
        j = int(rng.integers(0, N))
        m = int(rng.integers(m_min, mcap + 1))
        _check_staircase(tower, top, gap, mcap, m, i1, i2, j)
        pts.append(tower.level(j + i1 * N).sample(rng, 1))
        pts.append(tower.level(j + i2 * N).sample(rng, 1))
        cfg.append((m, i1, i2, j))
    x = np.concatenate([p[0] for p in pts])
    y = np.concatenate([p[1] for p in pts])
    ms = np.repeat([c[0] for c in cfg], 2)
    s = np.asarray(birkhoff_fast(spec, x, y, ms)).reshape(count, 2)
    out = []
    for (m, i1, i2, j), (a, b) in zip(cfg, s):
        step = (i2 - i1) * m * eps
        out.append(StaircaseRow(m, i1, i2, j, float(abs(b - a - step)), float(step)))
    return out


# correlations

def box_measure(spec: CeilingSpec, box: Box) -> float:
    """mu(box); exact when the fiber interval sits below the certified minimum of phi."""
    if box.s1 <= spec.min_value:
        return float(box.rect.area) * (box.s1 - box.s0)
    xs = (np.arange(256) + 0.5) / 256
    X, Y = np.meshgrid(float(box.rect.x0) + xs * float(box.rect.wx),
                       float(box.rect.y0) + xs * float(box.rect.wy), indexing="ij")
    phi = spec.evaluate(X.ravel(), Y.ravel())
    h = np.clip(np.minimum(phi, box.s1) - box.s0, 0.0, None)
    return float(box.rect.area) * float(h.mean())


def sample_mu(spec: CeilingSpec, count: int, seed: int, batch: int = 8) -> FlowPoint:
    """`count` points from mu by rejection under phi, one counter-based stream per sample.

    Sample i takes its r-th block of `batch` candidates from the stream
    (seed, i, r) and keeps the first accepted one, so any subset or ordering
    of samples reproduces the same points.
    """
    x = np.empty(count)
    y = np.empty(count)
    s = np.empty(count)
    todo = np.arange(count)
    r = 0
    top = spec.max_value
    while todo.size:
        draws = np.stack([np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(i), r)))
                          .random((batch, 3)) for i in todo])
        cx, cy, cs = draws[..., 0], draws[..., 1], draws[..., 2] * top
        ok = cs < np.asarray(spec.evaluate(cx.ravel(), cy.ravel())).reshape(cx.shape)
        hit = ok.any(axis=1)
        k = np.argmax(ok, axis=1)
        rows = np.flatnonzero(hit)
        x[todo[rows]] = cx[rows, k[rows]]
        y[todo[rows]] = cy[rows, k[rows]]
        s[todo[rows]] = cs[rows, k[rows]]
        todo = todo[~hit]
        r += 1
    return FlowPoint(x, y, s)


@dataclass
class CorrelationSeries:
    A: Box
    B: Box
    times: list[float]
    estimates: list[float]
    stderrs: list[float]
    samples: int
    seed: int
    mu_A: float = 0.0
    mu_B: float = 0.0
    labels: list[str] = field(default_factory=list)

    def rows(self) -> list[dict]:
        return [{"window": lab, "t": t, "estimate": e, "stderr": s}
                for lab, t, e, s in zip(self.labels or [""] * len(self.times), self.times,
                                        self.estimates, self.stderrs)]


def correlation_series(spec: CeilingSpec, A: Box, B: Box, times: Sequence[float], samples: int,
                       seed: int, labels: Sequence[str] | None = None) -> CorrelationSeries:
    """Estimates of mu(T^{-t} A n B) - mu(A) mu(B) with binomial standard errors.

    The same sample from mu is reused for every t; only the points in B are flowed.
    """
    if samples < 1000:
        raise InvalidArgument("need at least 1000 samples")
    p = sample_mu(spec, samples, seed)
    in_b = B.contains(p.x, p.y, p.s)
    idx = np.flatnonzero(in_b)
    mu_a, mu_b = box_measure(spec, A), box_measure(spec, B)
    ests, errs = [], []
    for t in times:
        if idx.size == 0:
            hit = np.zeros(0, dtype=bool)
        elif t == 0:
            hit = A.contains(p.x[idx], p.y[idx], p.s[idx])
        else:
            q, _ = flow(spec, FlowPoint(p.x[idx], p.y[idx], p.s[idx]), float(t))
            hit = A.contains(q.x, q.y, q.s)
        frac = hit.sum() / samples
        ests.append(float(frac - mu_a * mu_b))
        errs.append(float(math.sqrt(max(frac * (1 - frac), 1.0 / samples) / samples)))
    return CorrelationSeries(A, B, [float(t) for t in times], ests, errs, samples, seed, mu_a, mu_b,
                             list(labels) if labels is not None else [])


def correlation(spec: CeilingSpec, A: Box, B: Box, t: float, samples: int, seed: int) -> tuple[float, float]:
    s = correlation_series(spec, A, B, [t], samples, seed)
    return s.estimates[0], s.stderrs[0]


# time windows and the Step-3 split

@dataclass(frozen=True)
class TimeWindow:
    label: str
    n: int
    lo: float
    hi: float

    @property
    def empty(self) -> bool:
        return self.hi < self.lo

    def sample(self, count: int) -> list[float]:
        if self.empty:
            return []
        if count == 1 or self.hi == self.lo:
            return [float(self.hi)]
        return [float(v) for v in np.geomspace(max(self.lo, 1e-9), self.hi, count)]


def schedule_windows(pair: YPair, n: int) -> list[TimeWindow]:
    """The three mixing windows of level n, from the schedule."""
    r = pair.record(n)
    out = []
    if r.q_next is not None:
        out.append(TimeWindow("step1", n, 2 * r.q_prime, r.q_next / (n + 1) ** 2))
    out.append(TimeWindow("step2", n, r.q / n**2, r.q_prime / n**2))
    out.append(TimeWindow("step3", n, r.q_prime / n**2, 2 * r.q_prime))
    return out


@dataclass(frozen=True)
class RegionSplit:
    theta: Fraction
    eta: Fraction
    uniform: tuple[Fraction, Fraction] | None
    staircase: tuple[Fraction, Fraction] | None
    q_prime_prev: int

    def _measure(self, band) -> Fraction:
        return Fraction(0) if band is None else band[1] - band[0]

    @property
    def uniform_measure(self) -> Fraction:
        return self._measure(self.uniform)

    @property
    def staircase_measure(self) -> Fraction:
        return self._measure(self.staircase)

    @property
    def remainder(self) -> Fraction:
        return 1 - self.uniform_measure - self.staircase_measure

    def boxes(self, band) -> list[Rect]:
        """The band {q'_{n-1} y} in [lo, hi] as q'_{n-1} horizontal strips."""
        if band is None:
            return []
        lo, hi = band
        k = self.q_prime_prev
        return [Rect(Fraction(0), Fraction(1), (i + lo) / k, (hi - lo) / k) for i in range(k)]

    @property
    def uniform_boxes(self) -> list[Rect]:
        return self.boxes(self.uniform)

    @property
    def staircase_boxes(self) -> list[Rect]:
        return self.boxes(self.staircase)


def region_split(pair: YPair, n: int, t, eta) -> RegionSplit:
    """M^u = {1 - theta + eta <= {q'_{n-1} y} <= 1 - eta}, M^s = {{q'_{n-1} y} <= 1 - theta - eta}."""
    eta = Fraction(eta)
    if not 0 < eta < Fraction(1, 2):
        raise InvalidArgument("eta must lie in (0, 1/2)")
    r = pair.record(n)
    theta = Fraction(t) / r.q_prime
    lo_u, hi_u = max(Fraction(0), 1 - theta + eta), 1 - eta
    uniform = (lo_u, hi_u) if hi_u > lo_u else None
    hi_s = 1 - theta - eta
    staircase = (Fraction(0), min(hi_s, Fraction(1))) if hi_s > 0 else None
    return RegionSplit(theta, eta, uniform, staircase, r.q_prime_prev)


def index_concentration(spec: CeilingSpec, t: float, count: int, seed: int) -> tuple[float, float]:
    """min and max of m(z, t)/t over `count` points drawn from mu."""
    p = sample_mu(spec, count, seed)
    m = np.asarray(time_index(spec, p, t))
    return float(m.min() / t), float(m.max() / t)
