"""Birkhoff sums S_m phi(z) = sum_{i<m} phi(T^i z) for the translation T(x, y) = (x + alpha, y + alpha').

For a character chi(z) = e(l x + k y) with rotation number omega = l alpha + k alpha',
S_m chi = U_m chi with U_m = (1 - e(m omega))/(1 - e(omega)). Summing over a
trigonometric polynomial f with coefficients c this telescopes:

    S_m f(z) = m c_00 + G(z) - G(T^m z),    G = sum c/(1 - e(omega)) chi,

so a batch of Birkhoff sums costs two evaluations of G, whatever m is. The same
identity holds for negative m, where S_m f = -sum_{i=1}^{|m|} f(T^{-i} z).
Frequencies with |||omega||| below a resonance threshold are kept out of G and
summed through the bounded Dirichlet form of U_m instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .arith import FixedAngle, PrecisionPolicy
from .ceiling import NUFFT_EPS, CeilingSpec, fourier_eval
from .errors import InvalidArgument

RESONANCE = 2.0**-26


def reduced_phase(angle: FixedAngle, m) -> np.ndarray:
    """m * alpha reduced to [-1/2, 1/2)."""
    f = np.asarray(angle.frac_multiple(np.asarray(m)), dtype=np.float64)
    return f - np.floor(f + 0.5)


def rotation_numbers(angles: tuple[FixedAngle, FixedAngle], ls, ks) -> np.ndarray:
    """omega[a, b] = ls[a] alpha + ks[b] alpha' reduced to [-1/2, 1/2)."""
    wl = reduced_phase(angles[0], ls)
    wk = reduced_phase(angles[1], ks)
    om = wl[:, None] + wk[None, :]
    return om - np.floor(om + 0.5)


def geometric_ratio(omega, m) -> np.ndarray:
    """U_m = sum_{i<m} e(i omega), with the convention U_m = -sum_{i=m}^{-1} e(i omega) for m < 0.

    Written as e((m-1) omega / 2) sin(pi m omega)/sin(pi omega), which stays
    accurate as omega -> 0.
    """
    om = np.asarray(omega, dtype=np.float64)
    mm = np.asarray(m, dtype=np.float64)
    s = np.sin(np.pi * om)
    small = np.abs(s) < 1e-300
    safe = np.where(small, 1.0, s)
    dirichlet = np.where(small, mm, np.sin(np.pi * mm * om) / safe)
    return np.exp(1j * np.pi * (mm - 1.0) * om) * dirichlet


@dataclass(frozen=True)
class CharacterSum:
    """The character e(l x + k y) together with its reduced rotation number."""

    l: int
    k: int
    omega: float
    resonant: bool

    @classmethod
    def of(cls, angles: tuple[FixedAngle, FixedAngle], l: int, k: int,
           threshold: float = RESONANCE) -> "CharacterSum":
        om = float(rotation_numbers(angles, np.array([l]), np.array([k]))[0, 0])
        return cls(int(l), int(k), om, abs(om) < threshold)

    def ratio(self, m):
        return geometric_ratio(self.omega, m)

    def __call__(self, x, y, m):
        """S_m chi at (x, y)."""
        chi = np.exp(2j * np.pi * (self.l * np.asarray(x) + self.k * np.asarray(y)))
        return self.ratio(m) * chi

    def bound(self, m) -> np.ndarray:
        d = abs(self.omega)
        cap = math.inf if d == 0 else 1.0 / (2.0 * d)
        return np.minimum(np.abs(np.asarray(m, dtype=np.float64)), cap)


def character_bound(angles: tuple[FixedAngle, FixedAngle], l: int, k: int, m) -> np.ndarray:
    """min(|m|, 1/(2 |||l alpha + k alpha'|||)), the bound on |S_m chi_{l,k}|."""
    if l == 0 and k == 0:
        raise InvalidArgument("the trivial character has no rotation bound")
    return CharacterSum.of(angles, l, k).bound(m)


def orbit(angles: tuple[FixedAngle, FixedAngle], x, y, m):
    """T^m (x, y) reduced mod 1, elementwise in m."""
    return (np.mod(np.asarray(x) + angles[0].frac_multiple(np.asarray(m)), 1.0),
            np.mod(np.asarray(y) + angles[1].frac_multiple(np.asarray(m)), 1.0))


def _as_batch(x, y, m):
    x_arr, y_arr, m_arr = np.broadcast_arrays(np.asarray(x, dtype=np.float64),
                                              np.asarray(y, dtype=np.float64),
                                              np.asarray(m, dtype=np.int64))
    return x_arr.ravel(), y_arr.ravel(), m_arr.ravel(), x_arr.shape


def birkhoff_naive(spec: CeilingSpec, x, y, m, policy: PrecisionPolicy | None = None):
    """Direct compensated summation of phi along the orbit (m >= 0)."""
    xs, ys, ms, shape = _as_batch(x, y, m)
    if np.any(ms < 0):
        raise InvalidArgument("the naive sum takes m >= 0")
    if policy is not None:
        policy.check_iterate(ms)
    angles = spec.angles
    owner = np.repeat(np.arange(ms.size), ms)
    steps = np.arange(owner.size) - np.repeat(np.cumsum(ms) - ms, ms)
    ox, oy = orbit(angles, xs[owner], ys[owner], steps)
    vals = np.asarray(spec.evaluate(ox, oy), dtype=np.float64)
    bounds = np.concatenate([[0], np.cumsum(ms)])
    out = np.array([math.fsum(vals[bounds[i]:bounds[i + 1]]) for i in range(ms.size)])
    out = out.reshape(shape)
    return float(out) if out.ndim == 0 else out


class BirkhoffKernel:
    """Precomputed coboundary coefficients G for every term of a ceiling."""

    def __init__(self, spec: CeilingSpec, threshold: float = RESONANCE):
        self.spec = spec
        self.angles = spec.angles
        self.mean = spec.mean()
        self.blocks = []
        self.resonant: list[tuple[CharacterSum, complex]] = []
        for t in spec.terms:
            om = rotation_numbers(self.angles, t.ls, t.ks)
            trivial = (t.ls[:, None] == 0) & (t.ks[None, :] == 0)
            res = (np.abs(om) < threshold) & ~trivial & (t.coeffs != 0)
            den = 1.0 - np.exp(2j * np.pi * om)
            g = np.where(trivial | res, 0.0, t.coeffs / np.where(trivial | res, 1.0, den))
            self.blocks.append((t.ls, t.ks, g))
            for a, b in zip(*np.nonzero(res)):
                self.resonant.append((CharacterSum(int(t.ls[a]), int(t.ks[b]), float(om[a, b]), True),
                                      complex(t.coeffs[a, b])))

    def tolerance(self) -> float:
        """Rounding budget of one S_m value: two evaluations of G at relative accuracy NUFFT_EPS."""
        mass = sum(float(np.abs(g).sum()) for _, _, g in self.blocks)
        return 2.0 * NUFFT_EPS * mass + 1e-15 * abs(self.mean)

    def coboundary(self, x, y, order_x: int = 0, order_y: int = 0) -> np.ndarray:
        """G (or a partial derivative of G) at the points."""
        out = np.zeros(np.size(x))
        for ls, ks, g in self.blocks:
            c = g
            if order_x:
                c = c * ((2j * np.pi * ls) ** order_x)[:, None]
            if order_y:
                c = c * ((2j * np.pi * ks) ** order_y)[None, :]
            out += fourier_eval(ls, ks, c, x, y).real
        return out

    def _resonant(self, x, y, m, order_x: int = 0, order_y: int = 0):
        out = np.zeros(np.size(x))
        for ch, c in self.resonant:
            out = out + (c * (2j * np.pi * ch.l) ** order_x * (2j * np.pi * ch.k) ** order_y
                         * ch(x, y, m)).real
        return out

    def consecutive(self, x, y, m, g0=None):
        """(S_m, S_{m+1}) at flat arrays of points, from one evaluation of G."""
        w = self.window(x, y, m, 1, g0)
        return w[:, 0], w[:, 1]

    def window(self, x, y, m, width: int, g0=None):
        """S_{m+k} for k = 0..width at flat arrays of points, shape (points, width+1)."""
        if g0 is None:
            g0 = self.coboundary(x, y)
        ks = np.arange(width + 1)
        mm = (m[:, None] + ks[None, :]).ravel()
        xr = np.repeat(x, width + 1)
        yr = np.repeat(y, width + 1)
        xm, ym = orbit(self.angles, xr, yr, mm)
        out = mm * self.mean + np.repeat(g0, width + 1) - self.coboundary(xm, ym) + self._resonant(xr, yr, mm)
        return out.reshape(x.size, width + 1)

    def __call__(self, x, y, m, order_x: int = 0, order_y: int = 0, policy: PrecisionPolicy | None = None):
        xs, ys, ms, shape = _as_batch(x, y, m)
        if policy is not None:
            policy.check_iterate(ms)
        xm, ym = orbit(self.angles, xs, ys, ms)
        both = self.coboundary(np.concatenate([xs, xm]), np.concatenate([ys, ym]), order_x, order_y)
        out = both[:xs.size] - both[xs.size:]
        if order_x == 0 and order_y == 0:
            out = out + ms * self.mean
        out = out + self._resonant(xs, ys, ms, order_x, order_y)
        out = out.reshape(shape)
        return float(out) if out.ndim == 0 else out


def kernel_for(spec: CeilingSpec) -> BirkhoffKernel:
    """The (cached) kernel of a ceiling."""
    k = spec.__dict__.get("_birkhoff_kernel")
    if k is None:
        k = BirkhoffKernel(spec)
        spec.__dict__["_birkhoff_kernel"] = k
    return k


def birkhoff_fast(spec: CeilingSpec, x, y, m, order_x: int = 0, order_y: int = 0,
                  policy: PrecisionPolicy | None = None):
    """D_x^order_x D_y^order_y S_m phi at (x, y), vectorized over points and m."""
    if order_x < 0 or order_y < 0:
        raise InvalidArgument("derivative orders must be nonnegative")
    return kernel_for(spec)(x, y, m, order_x, order_y, policy)


def mean_growth_bound(spec: CeilingSpec, m) -> np.ndarray:
    """sum over nonconstant frequencies of |c| min(|m|, 1/(2|||omega|||)), a bound on |S_m phi - m|."""
    angles = spec.angles
    m_arr = np.abs(np.asarray(m, dtype=np.float64))
    total = np.zeros_like(m_arr)
    for t in spec.terms:
        om = np.abs(rotation_numbers(angles, t.ls, t.ks))
        a = np.abs(t.coeffs)
        live = (a > 0) & ~((t.ls[:, None] == 0) & (t.ks[None, :] == 0))
        cap = 1.0 / (2.0 * om[live])
        w = a[live]
        order = np.argsort(cap)
        cap, w = cap[order], w[order]
        # sum_f w_f min(m, cap_f) = m * (weight with cap > m) + sum of w cap over cap <= m
        wc = np.concatenate([[0.0], np.cumsum(w * cap)])
        wt = np.concatenate([[0.0], np.cumsum(w)])
        idx = np.searchsorted(cap, m_arr, side="right")
        total = total + wc[idx] + m_arr * (wt[-1] - wt[idx])
    return float(total) if total.ndim == 0 else total
