"""The special flow under phi over the torus translation.

A point is (x, y, s) with 0 <= s < phi(x, y). Flowing for time t moves s up at
unit speed and wraps (z, phi(z)) to (Tz, 0), so

    T^t(z, s) = (T^m z, s + t - S_m phi(z)),   S_m phi(z) <= s + t < S_{m+1} phi(z).

The index m is found for whole batches at once: a hard bracket from the
certified bounds of phi, then secant steps on m -> S_m phi(z) - (s + t) with a
bisection fallback. A NUFFT call costs the same for ten points or a hundred
thousand, so after the first probe every probe scans a window of consecutive
m in one batched evaluation of the coboundary G.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arith import PrecisionPolicy
from .birkhoff import kernel_for, orbit
from .ceiling import CeilingSpec
from .errors import InvalidArgument, PrecisionError

TIE = 1e-12
MAX_PROBES = 200
SCAN_WIDTH = 24
SCAN_POINTS = 1_000_000


@dataclass
class FlowPoint:
    """A batch (or a single point) of the flow space."""

    x: np.ndarray
    y: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        self.x, self.y, self.s = (np.asarray(v, dtype=np.float64) for v in
                                  np.broadcast_arrays(self.x, self.y, self.s))

    @property
    def size(self) -> int:
        return int(self.x.size)

    def check(self, spec: CeilingSpec, tol: float = TIE) -> None:
        phi = spec.evaluate(self.x, self.y)
        if np.any(self.s < -tol) or np.any(self.s >= phi + tol):
            raise InvalidArgument("fiber coordinate outside [0, phi)")


def _resolve(spec, policy, x, y, g):
    """m with S_m <= g < S_m + phi(T^m z) (ties advance m), plus the residual g - S_m."""
    lo_phi, hi_phi = spec.min_value, spec.max_value
    mean = spec.mean()
    a = np.minimum(g / lo_phi, g / hi_phi)
    b = np.maximum(g / lo_phi, g / hi_phi)
    lo = np.floor(a).astype(np.int64) - 1   # S_lo <= g
    hi = np.ceil(b).astype(np.int64) + 1    # S_hi > g
    top = int(max(np.abs(lo).max(initial=0), np.abs(hi).max(initial=0)))
    if policy is not None:
        policy.check_iterate(top)
    m = np.clip(np.rint(g / mean).astype(np.int64), lo + 1, hi - 1)
    m = np.where(hi - lo <= 1, lo, m)
    done = np.zeros(g.size, dtype=bool)
    out_m = np.zeros(g.size, dtype=np.int64)
    out_r = np.zeros(g.size)
    kernel = kernel_for(spec)
    g0 = kernel.coboundary(x, y)
    width = 1
    for _ in range(MAX_PROBES):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        # scan S_{m+k}, k = 0..width, around the current guess; the width grows as
        # the active set shrinks, so stragglers scan their whole bracket at once
        span = int((hi[act] - lo[act]).max())
        width = int(min(max(width, SCAN_POINTS // act.size), max(span, 1)))
        start = np.clip(m[act] - (width - 1) // 2, lo[act], np.maximum(hi[act] - width, lo[act]))
        sw = kernel.window(x[act], y[act], start, width, g0[act])
        rho = g[act][:, None] - sw[:, :-1]
        f = sw[:, 1:] - sw[:, :-1]
        ok = (rho > -TIE) & (rho < f - TIE)
        hit = ok.any(axis=1)
        k = np.argmax(ok, axis=1)
        rows = np.flatnonzero(hit)
        out_m[act[rows]] = start[rows] + k[rows]
        out_r[act[rows]] = np.maximum(rho[rows, k[rows]], 0.0)
        done[act[hit]] = True
        miss = ~hit
        if not miss.any():
            break
        rest = act[miss]
        # every scanned S_j above g moves hi down, every S_{j+1} <= g moves lo up
        above = rho[miss] <= -TIE
        below = ~above
        first_above = np.where(above.any(axis=1), np.argmax(above, axis=1), width)
        last_below = np.where(below.any(axis=1), width - 1 - np.argmax(below[:, ::-1], axis=1), -1)
        st = start[miss]
        hi[rest] = np.where(first_above < width, np.minimum(hi[rest], st + first_above), hi[rest])
        lo[rest] = np.where(last_below >= 0, np.maximum(lo[rest], st + last_below + 1), lo[rest])
        if np.any(hi[rest] <= lo[rest]):
            raise PrecisionError("time index bracket collapsed; the certified bounds of phi are violated")
        edge = np.where(first_above < width, 0, width - 1)
        resid = rho[miss][np.arange(rest.size), edge]
        cand = st + edge + np.rint(resid / mean).astype(np.int64)
        l, h = lo[rest], hi[rest]
        m[rest] = np.where((cand >= l) & (cand < h), cand, l + (h - l) // 2)
        width = SCAN_WIDTH
    else:
        raise PrecisionError("time index search did not converge")
    return out_m, out_r


def time_index(spec: CeilingSpec, p: FlowPoint, t, policy: PrecisionPolicy | None = None):
    """The index m(z, s, t); negative t runs the same search on the reversed bracket."""
    x, y, s, tt = np.broadcast_arrays(p.x, p.y, p.s, np.asarray(t, dtype=np.float64))
    m, _ = _resolve(spec, policy, x.ravel(), y.ravel(), (s + tt).ravel())
    m = m.reshape(x.shape)
    return int(m) if m.ndim == 0 else m


def flow(spec: CeilingSpec, p: FlowPoint, t, policy: PrecisionPolicy | None = None):
    """(T^t p, m) for a batch of points and times."""
    x, y, s, tt = np.broadcast_arrays(p.x, p.y, p.s, np.asarray(t, dtype=np.float64))
    shape = x.shape
    xf, yf = x.ravel(), y.ravel()
    m, r = _resolve(spec, policy, xf, yf, (s + tt).ravel())
    xm, ym = orbit(spec.angles, xf, yf, m)
    return FlowPoint(xm.reshape(shape), ym.reshape(shape), r.reshape(shape)), m.reshape(shape)


def flow_map(spec: CeilingSpec, p: FlowPoint, t, policy: PrecisionPolicy | None = None) -> FlowPoint:
    if np.all(np.asarray(t) == 0):
        return FlowPoint(p.x.copy(), p.y.copy(), p.s.copy())
    return flow(spec, p, t, policy)[0]
