"""The ceiling function phi = phi0 + sum_n (X_n + Y_n).

Per level n the untruncated pieces are

    kappa_n   a (1/q'_{n-1})-periodic staircase in y with steps eps_n,
    nu_n, upsilon_n   plateau windows on the rectangles R_n^j,
    Xt_n(x, y) = sum_j kappa_n(y - beta_j) nu_n(x - j p_n/q_n) upsilon_n(y - j p'_{n-1}/q'_{n-1}),
    Yt_n(x, y) = -cos(2 pi q_n x) exp(-q_n) phit_n(y).

At any point exactly one window term of Xt_n is nonzero; its index j is found
by the Chinese remainder theorem, so pointwise evaluation is O(1).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import finufft
import mpmath
import numpy as np
from scipy.fft import next_fast_len
from scipy.optimize import minimize_scalar
from scipy.special import expit

from .arith import FixedAngle
from .errors import AliasingError, InvalidArgument, NonpositiveCeiling
from .pairgen import LevelRecord, YPair

TWO_PI = 2.0 * math.pi


def bump(s):
    """theta(s) = f(s)/(f(s)+f(1-s)) with f(s) = exp(-1/s) on s > 0, else 0."""
    s_arr = np.asarray(s, dtype=np.float64)
    inner = (s_arr > 0.0) & (s_arr < 1.0)
    safe = np.where(inner, s_arr, 0.5)
    with np.errstate(over="ignore"):
        val = expit(1.0 / (1.0 - safe) - 1.0 / safe)
    out = np.where(inner, val, np.where(s_arr >= 1.0, 1.0, 0.0))
    return float(out) if np.ndim(s) == 0 else out


def _bump_mp(s):
    if s <= 0:
        return mpmath.mpf(0)
    if s >= 1:
        return mpmath.mpf(1)
    return 1 / (1 + mpmath.exp(1 / (1 - s) - 1 / s))


@lru_cache(maxsize=None)
def bump_cnorm(p: int) -> float:
    """sup |theta^(p)| over the real line, measured numerically."""
    if p == 0:
        return 1.0
    with mpmath.workdps(30):
        def neg(s):
            return -abs(float(mpmath.diff(_bump_mp, mpmath.mpf(s), p)))
        grid = np.linspace(0.01, 0.99, 99)
        vals = [neg(s) for s in grid]
        best = float(grid[int(np.argmin(vals))])
        res = minimize_scalar(neg, bounds=(max(best - 0.01, 1e-4), min(best + 0.01, 1 - 1e-4)),
                              method="bounded", options={"xatol": 1e-9})
        return float(max(-res.fun, -min(vals)))


@dataclass(frozen=True)
class BumpProfile:
    """The bump theta together with its tabulated derivative sup-norms."""

    max_order: int = 6

    def __call__(self, s):
        return bump(s)

    @property
    def norms(self) -> tuple[float, ...]:
        return tuple(bump_cnorm(p) for p in range(self.max_order + 1))


NUFFT_EPS = 1e-12
DENSE_WORK = 20_000_000
NUFFT_THREADS = 1


def set_threads(count: int) -> None:
    """Threads used by every NUFFT call; results do not depend on the count."""
    global NUFFT_THREADS
    if count < 1:
        raise InvalidArgument("thread count must be positive")
    NUFFT_THREADS = int(count)


def _centered(a: np.ndarray) -> bool:
    """True for an axis -R..R with unit steps, the layout the NUFFT expects."""
    return a.size % 2 == 1 and a[0] == -a[-1] and bool(np.all(np.diff(a) == 1))


def _dense_eval(ls, ks, c, x, y):
    out = np.empty(x.size, dtype=np.complex128)
    step = max(1, 2_000_000 // max(1, ls.size + ks.size))
    for s in range(0, x.size, step):
        ex = np.exp(2j * np.pi * np.outer(x[s:s + step], ls))
        ey = np.exp(2j * np.pi * np.outer(y[s:s + step], ks))
        out[s:s + step] = np.einsum("pb,pb->p", ex @ c, ey)
    return out


def fourier_eval(ls, ks, c, x, y) -> np.ndarray:
    """sum_{a,b} c[a, b] e(ls[a] x + ks[b] y) at the points (x[i], y[i]).

    Large centred blocks go through a type-2 NUFFT, blocks with few x
    frequencies through one 1-D NUFFT per row, everything else densely.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if x.size == 0:
        return np.zeros(0, dtype=np.complex128)
    if x.size * c.size <= DENSE_WORK:
        return _dense_eval(ls, ks, c, x, y)
    tx = TWO_PI * np.mod(x, 1.0)
    ty = TWO_PI * np.mod(y, 1.0)
    if _centered(ls) and _centered(ks):
        return finufft.nufft2d2(tx, ty, np.ascontiguousarray(c, dtype=np.complex128),
                                eps=NUFFT_EPS, isign=1, nthreads=NUFFT_THREADS)
    if _centered(ks) and ls.size <= 8:
        out = np.zeros(x.size, dtype=np.complex128)
        for a, l in enumerate(ls):
            row = np.ascontiguousarray(c[a], dtype=np.complex128)
            out += np.exp(1j * l * tx) * finufft.nufft1d2(ty, row, eps=NUFFT_EPS, isign=1, nthreads=NUFFT_THREADS)
        return out
    return _dense_eval(ls, ks, c, x, y)


@dataclass
class TrigPolynomial:
    """sum_{a,b} coeffs[a, b] exp(2 pi i (ls[a] x + ks[b] y)) on a tensor grid of frequencies."""

    ls: np.ndarray
    ks: np.ndarray
    coeffs: np.ndarray
    hermitian: bool = True

    def __post_init__(self):
        self.ls = np.asarray(self.ls, dtype=np.int64)
        self.ks = np.asarray(self.ks, dtype=np.int64)
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if self.coeffs.shape != (self.ls.size, self.ks.size):
            raise InvalidArgument("coefficient block does not match frequency axes")

    @classmethod
    def from_dict(cls, coeffs: dict, hermitian: bool = True) -> "TrigPolynomial":
        ls = sorted({l for l, _ in coeffs})
        ks = sorted({k for _, k in coeffs})
        block = np.zeros((len(ls), len(ks)), dtype=np.complex128)
        li = {l: i for i, l in enumerate(ls)}
        ki = {k: i for i, k in enumerate(ks)}
        for (l, k), c in coeffs.items():
            block[li[l], ki[k]] = c
        return cls(np.array(ls or [0]), np.array(ks or [0]),
                   block if block.size else np.zeros((1, 1)), hermitian)

    def coefficient(self, l: int, k: int) -> complex:
        a = np.flatnonzero(self.ls == l)
        b = np.flatnonzero(self.ks == k)
        if a.size == 0 or b.size == 0:
            return 0j
        return complex(self.coeffs[a[0], b[0]])

    def items(self):
        a, b = np.nonzero(self.coeffs)
        for i, j in zip(a, b):
            yield (int(self.ls[i]), int(self.ks[j])), complex(self.coeffs[i, j])

    def as_dict(self) -> dict:
        return dict(self.items())

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.coeffs))

    @property
    def constant(self) -> complex:
        return self.coefficient(0, 0)

    def abs_sum(self) -> float:
        return float(np.abs(self.coeffs).sum())

    def scaled(self, order_x: int = 0, order_y: int = 0) -> np.ndarray:
        """Coefficients of the (order_x, order_y) partial derivative."""
        c = self.coeffs
        if order_x:
            c = c * ((2j * np.pi * self.ls) ** order_x)[:, None]
        if order_y:
            c = c * ((2j * np.pi * self.ks) ** order_y)[None, :]
        return c

    def evaluate(self, x, y, order_x: int = 0, order_y: int = 0, complex_out: bool = False):
        x_arr, y_arr = np.broadcast_arrays(np.atleast_1d(np.asarray(x, dtype=np.float64)),
                                           np.atleast_1d(np.asarray(y, dtype=np.float64)))
        out = fourier_eval(self.ls, self.ks, self.scaled(order_x, order_y),
                           x_arr.ravel(), y_arr.ravel()).reshape(x_arr.shape)
        res = out if complex_out else out.real
        if np.ndim(x) == 0 and np.ndim(y) == 0:
            return complex(res[0]) if complex_out else float(res[0])
        return res

    def on_grid(self, nx: int, ny: int, order_x: int = 0, order_y: int = 0) -> np.ndarray:
        """Values (or a derivative) on the uniform nx-by-ny grid via one inverse FFT."""
        if nx <= 2 * np.abs(self.ls).max() or ny <= 2 * np.abs(self.ks).max():
            raise InvalidArgument("grid too coarse for inverse FFT evaluation")
        c = self.scaled(order_x, order_y)
        block = np.zeros((nx, ny), dtype=np.complex128)
        block[np.ix_(self.ls % nx, self.ks % ny)] = c
        return (np.fft.ifft2(block) * (nx * ny)).real

    def lipschitz(self) -> tuple[float, float]:
        a = np.abs(self.coeffs)
        return (TWO_PI * float((a * np.abs(self.ls)[:, None]).sum()),
                TWO_PI * float((a * np.abs(self.ks)[None, :]).sum()))


def spectral_taper(rho, width: float):
    """1 on rho <= 1 - width, falling smoothly to 0 at rho = 1."""
    return 1.0 - bump((np.asarray(rho) - (1.0 - width)) / width)


def _inverse(a: int, mod: int) -> int:
    return 0 if mod == 1 else pow(a % mod, -1, mod)


@dataclass
class LevelGeometry:
    """Level-n data shared by the ceiling, the towers and the diagnostics."""

    rec: LevelRecord
    eps: float
    bump: BumpProfile = field(default_factory=BumpProfile)

    def __post_init__(self):
        r = self.rec
        if math.gcd(r.q, r.q_prime_prev) != 1:
            raise InvalidArgument(f"gcd(q_{r.n}, q'_{r.n - 1}) != 1")
        q, qpp = r.q, r.q_prime_prev
        inv_p = _inverse(r.p, q)
        inv_pp = _inverse(r.p_prime_prev, qpp)
        jq = (np.arange(q)[:, None] * inv_p) % q
        jqq = (np.arange(qpp)[None, :] * inv_pp) % qpp
        # CRT: j = jq mod q, j = jqq mod qpp
        m1 = qpp * _inverse(qpp, q)
        m2 = q * _inverse(q, qpp)
        self.crt = ((jq * m1 + jqq * m2) % (q * qpp)).astype(np.int64)

    @property
    def n(self) -> int:
        return self.rec.n

    @property
    def q(self) -> int:
        return self.rec.q

    @property
    def r(self) -> int:
        return self.rec.q_prime // (self.rec.q * self.rec.q_prime_prev) - 1

    @property
    def h(self) -> int:
        n = self.n
        return math.floor(Fraction(n - 2, n) * self.r) * self.rec.q * self.rec.q_prime_prev

    @property
    def i_max(self) -> int:
        """Largest i with i <= (1 - 2/n) r_n."""
        return math.floor(Fraction(self.n - 2, self.n) * self.r)

    @property
    def period_count(self) -> int:
        return self.rec.q * self.rec.q_prime_prev

    def beta(self, j):
        return np.asarray(j, dtype=np.float64) / (self.rec.q_prime_prev * self.rec.q_prime)

    def kappa(self, y):
        r = self.rec
        n2 = self.n**2
        y_arr = np.asarray(y, dtype=np.float64)
        u0 = np.mod(y_arr * r.q_prime_prev, 1.0)
        u = u0 * (r.q_prime / (r.q * r.q_prime_prev))
        L = np.floor(u)
        steps = np.clip(L - 1, 0, self.r)
        inside = (L >= 1) & (L <= self.r)
        steps = steps + np.where(inside, bump(n2 * (u - L)), 0.0)
        cut = 1.0 - bump(self.n * u0 - self.n + 2)
        out = self.eps * steps * cut
        return float(out) if np.ndim(y) == 0 else out

    def nu(self, t):
        """nu_n at x = t/q_n for t in [0, 1]; zero outside."""
        n2 = self.n**2
        t = np.asarray(t, dtype=np.float64)
        v = bump(n2 * t) - bump(n2 * (t - 1.0) + 2.0)
        return np.where((t >= 0.0) & (t <= 1.0), v, 0.0)

    def upsilon(self, w):
        """upsilon_n at y = w/q'_{n-1} for w in [-2/n^2, 1 - 2/n^2]; zero outside."""
        n2 = self.n**2
        w = np.asarray(w, dtype=np.float64)
        v = bump(n2 * w + 2.0) - bump(n2 * (w - 1.0) + 3.0)
        return np.where((w >= -2.0 / n2) & (w <= 1.0 - 2.0 / n2), v, 0.0)

    def window_index(self, x, y):
        """(j, t, w): the only window index alive at (x, y) and the local coordinates."""
        r = self.rec
        tx = np.mod(np.asarray(x, dtype=np.float64), 1.0) * r.q
        a = np.floor(tx).astype(np.int64) % r.q
        t = tx - np.floor(tx)
        wy = np.mod(np.asarray(y, dtype=np.float64), 1.0) * r.q_prime_prev + 2.0 / self.n**2
        b = np.floor(wy).astype(np.int64) % r.q_prime_prev
        w = wy - np.floor(wy) - 2.0 / self.n**2
        return self.crt[a, b], t, w

    def window(self, x, y, j=0):
        """nu_n(x - j p/q) upsilon_n(y - j p'/q'), each restricted and extended by zero."""
        r = self.rec
        x_arr = np.asarray(x, dtype=np.float64)
        y_arr = np.asarray(y, dtype=np.float64)
        sx = np.mod(x_arr - np.mod(j * r.p, r.q) / r.q, 1.0) * r.q
        sy = np.mod(y_arr - np.mod(j * r.p_prime_prev, r.q_prime_prev) / r.q_prime_prev
                    + 2.0 / (self.n**2 * r.q_prime_prev), 1.0) * r.q_prime_prev - 2.0 / self.n**2
        out = self.nu(sx) * self.upsilon(sy)
        return float(out) if np.ndim(x) == 0 and np.ndim(y) == 0 else out

    def xtilde(self, x, y):
        j, t, w = self.window_index(x, y)
        out = self.kappa(np.asarray(y, dtype=np.float64) - self.beta(j)) * self.nu(t) * self.upsilon(w)
        return float(out) if np.ndim(x) == 0 and np.ndim(y) == 0 else out

    def phitilde(self, y):
        n = self.n
        u0 = np.mod(np.asarray(y, dtype=np.float64) * self.rec.q_prime_prev, 1.0)
        out = bump(n**3 * u0 - n**3 + n**2) - bump(n**3 * u0 - n**3 + n)
        return float(out) if np.ndim(y) == 0 else out

    def ytilde(self, x, y):
        out = -np.cos(TWO_PI * self.q * np.asarray(x, dtype=np.float64)) * math.exp(-self.q) * self.phitilde(y)
        return float(out) if np.ndim(x) == 0 and np.ndim(y) == 0 else out

    # Fourier side

    def feature_scales(self) -> tuple[float, float]:
        """Inverse widths of the sharpest transitions in x and in y."""
        r, n2 = self.rec, self.n**2
        return n2 * r.q, n2 * max(r.q_prime / r.q, r.q_prime_prev)

    def default_exponents(self, rx: int, ry: int, oversample: int = 8, cap: int = 18) -> tuple[int, int]:
        fx, fy = self.feature_scales()
        ex = max(math.ceil(math.log2(4 * rx)), math.ceil(math.log2(oversample * fx)))
        ey = max(math.ceil(math.log2(4 * ry)), math.ceil(math.log2(oversample * fy)))
        return min(ex, cap), min(ey, cap)

    def truncate_x(self, radii: tuple[int, int], exponents: tuple[int, int],
                   taper: float = 0.0) -> TrigPolynomial:
        rx, ry = radii
        ex, ey = exponents
        nx, ny = 2**ex, 2**ey
        if nx < 4 * rx or ny < 4 * ry:
            raise AliasingError(f"grid {nx}x{ny} too small for radii {rx}x{ry}")
        r = self.rec
        ls = np.arange(-rx, rx + 1)
        ks = np.arange(-ry, ry + 1)
        # x factor: one window per residue a = j p mod q
        xs = np.arange(nx) / nx
        tx = xs * r.q
        a_of = np.floor(tx).astype(np.int64) % r.q
        vx = self.nu(tx - np.floor(tx))
        fx_hat = np.zeros((ls.size, r.q), dtype=np.complex128)
        live = np.flatnonzero(vx)
        for s in range(0, live.size, 4096):
            idx = live[s:s + 4096]
            e = np.exp(-2j * np.pi * np.outer(ls, xs[idx])) * vx[idx]
            for a in np.unique(a_of[idx]):
                sel = a_of[idx] == a
                fx_hat[:, a] += e[:, sel].sum(axis=1)
        fx_hat /= nx
        # y factor: H[a, y] = kappa(y - beta_j) upsilon_j(y) with j = crt[a, b(y)]
        ys = np.arange(ny) / ny
        wy = ys * r.q_prime_prev + 2.0 / self.n**2
        b_of = np.floor(wy).astype(np.int64) % r.q_prime_prev
        vy = self.upsilon(wy - np.floor(wy) - 2.0 / self.n**2)
        keep = ks % ny
        h_hat = np.empty((r.q, ks.size), dtype=np.complex128)
        for a in range(r.q):
            row = self.kappa(ys - self.beta(self.crt[a, b_of])) * vy
            h_hat[a] = np.fft.fft(row)[keep] / ny
        c = fx_hat @ h_hat
        c = 0.5 * (c + np.conj(c[::-1, ::-1]))
        rho = np.sqrt((ls[:, None] / max(rx, 1)) ** 2 + (ks[None, :] / max(ry, 1)) ** 2)
        excl = (ls[:, None] % r.q == 0) & (ks[None, :] % r.q_prime == 0) & (ks[None, :] != 0)
        c = np.where((rho <= 1.0) & ~excl, c, 0.0)
        if taper > 0:
            c = c * spectral_taper(rho, taper)
        return TrigPolynomial(ls, ks, c)

    def phitilde_coefficients(self, jmax: int, exponent: int = 16) -> np.ndarray:
        """Fourier coefficients phi_j, |j| <= jmax, of phit_n by a uniform-grid FFT."""
        ny = 2**exponent
        ys = np.arange(ny) / ny
        spec = np.fft.fft(self.phitilde(ys)) / ny
        return spec[np.arange(-jmax, jmax + 1) % ny]

    def truncate_y(self, exponent: int | None = None) -> TrigPolynomial:
        r = self.rec
        jmax = r.q_prime - 1
        need = math.ceil(math.log2(max(4 * jmax, 64 * self.n**3 * r.q_prime_prev)))
        e = max(need, exponent or 0)
        coeff = self.phitilde_coefficients(jmax, e)
        ks = np.arange(-jmax, jmax + 1)
        # only multiples of q'_{n-1} survive the period 1/q'_{n-1}
        coeff = np.where(ks % r.q_prime_prev == 0, coeff, 0.0)
        coeff = 0.5 * (coeff + np.conj(coeff[::-1]))
        amp = -0.5 * math.exp(-r.q)
        return TrigPolynomial(np.array([-r.q, r.q]), ks, np.vstack([amp * coeff, amp * coeff]))


@dataclass
class CeilingSpec:
    pair: YPair
    phi0_exact: Fraction
    n0: int | None
    levels: list[LevelGeometry]
    X: list[TrigPolynomial]
    Y: list[TrigPolynomial]
    staircase_scale: float
    min_value: float
    max_value: float
    radii: list[tuple[int, int]]
    exponents: list[tuple[int, int]]
    taper: float = 0.0
    certify_grid: tuple[int, int] | None = None

    @property
    def phi0(self) -> float:
        return float(self.phi0_exact)

    @property
    def eps(self) -> list[float]:
        return [g.eps for g in self.levels]

    @property
    def terms(self) -> list[TrigPolynomial]:
        return self.X + self.Y

    @property
    def angles(self) -> tuple[FixedAngle, FixedAngle]:
        return self.pair.alpha.angle(), self.pair.alpha_prime.angle()

    def level(self, n: int) -> LevelGeometry:
        for g in self.levels:
            if g.n == n:
                return g
        raise InvalidArgument(f"level {n} is not built")

    def level_index(self, n: int) -> int:
        return [g.n for g in self.levels].index(n)

    def mean_exact(self) -> Fraction:
        """phi0 plus the constant coefficients, summed as exact rationals."""
        return self.phi0_exact + sum((Fraction(t.constant.real) for t in self.terms), Fraction(0))

    def mean(self) -> float:
        return float(self.mean_exact())

    def __call__(self, x, y, order_x: int = 0, order_y: int = 0):
        return self.evaluate(x, y, order_x, order_y)

    def evaluate(self, x, y, order_x: int = 0, order_y: int = 0, skip: tuple[int, ...] = ()):
        base = self.phi0 if order_x == 0 and order_y == 0 else 0.0
        out = np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape) + base
        for k, t in enumerate(self.terms):
            if k in skip:
                continue
            out = out + t.evaluate(x, y, order_x, order_y)
        return float(out) if np.ndim(out) == 0 else out

    def untruncated(self, x, y):
        out = self.phi0 + 0.0 * np.asarray(x, dtype=np.float64)
        for g in self.levels:
            out = out + g.xtilde(x, y) + g.ytilde(x, y)
        return out

    def without_level(self, n: int) -> "CeilingSpec":
        """The same ceiling with the level-n terms dropped (phi0 unchanged)."""
        k = self.level_index(n)
        keep = [i for i in range(len(self.levels)) if i != k]
        return CeilingSpec(self.pair, self.phi0_exact, self.n0, [self.levels[i] for i in keep],
                           [self.X[i] for i in keep], [self.Y[i] for i in keep],
                           self.staircase_scale, self.min_value, self.max_value,
                           [self.radii[i] for i in keep], [self.exponents[i] for i in keep],
                           self.taper, self.certify_grid)

    def as_dict(self) -> dict:
        return {
            "pair": self.pair.as_dict(),
            "phi0": str(self.phi0_exact),
            "phi0_float": self.phi0,
            "n0": self.n0,
            "levels": [g.n for g in self.levels],
            "eps": self.eps,
            "staircase_scale": self.staircase_scale,
            "min_value": self.min_value,
            "max_value": self.max_value,
            "radii": [list(r) for r in self.radii],
            "exponents": [list(e) for e in self.exponents],
            "taper": self.taper,
            "certify_grid": list(self.certify_grid) if self.certify_grid else None,
        }

    def save(self, directory) -> None:
        """Write meta.json plus one .npy file per coefficient block (bit-exact, reproducible)."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        (out / "meta.json").write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n")
        for kind, terms in (("X", self.X), ("Y", self.Y)):
            for g, t in zip(self.levels, terms):
                np.save(out / f"{kind}{g.n}_ls.npy", t.ls)
                np.save(out / f"{kind}{g.n}_ks.npy", t.ks)
                np.save(out / f"{kind}{g.n}_coeffs.npy", t.coeffs)

    @classmethod
    def load(cls, directory, pair: YPair) -> "CeilingSpec":
        src = Path(directory)
        meta = json.loads((src / "meta.json").read_text())
        levels, xs, ys = [], [], []
        recs = {r.n: r for r in pair.schedule}
        for n, eps in zip(meta["levels"], meta["eps"]):
            levels.append(LevelGeometry(recs[n], eps))
            for kind, bucket in (("X", xs), ("Y", ys)):
                bucket.append(TrigPolynomial(np.load(src / f"{kind}{n}_ls.npy"),
                                             np.load(src / f"{kind}{n}_ks.npy"),
                                             np.load(src / f"{kind}{n}_coeffs.npy")))
        grid = meta.get("certify_grid")
        return cls(pair, Fraction(meta["phi0"]), meta["n0"], levels, xs, ys, meta["staircase_scale"],
                   meta["min_value"], meta["max_value"], [tuple(r) for r in meta["radii"]],
                   [tuple(e) for e in meta["exponents"]], meta.get("taper", 0.0),
                   tuple(grid) if grid else None)


def raw_eps(rec: LevelRecord) -> Fraction:
    return Fraction(rec.q_prime_prev**7, rec.q_prime)


def default_staircase_scale(records: list[LevelRecord], budget: float = 0.4) -> float:
    """Global multiplier making sum_n r_n eps_n equal to `budget`."""
    total = Fraction(0)
    for rec in records:
        r = rec.q_prime // (rec.q * rec.q_prime_prev) - 1
        total += max(r, 0) * raw_eps(rec)
    return float(Fraction(budget) / total) if total > 0 else 1.0


def usable_levels(pair: YPair) -> list[LevelRecord]:
    """Levels carrying an X_n/Y_n pair: positive sign convention and a nonempty tower."""
    out = []
    for rec in pair.schedule:
        if not rec.parity_ok or rec.n < 3 or math.gcd(rec.q, rec.q_prime_prev) != 1:
            continue
        r = rec.q_prime // (rec.q * rec.q_prime_prev) - 1
        if math.floor(Fraction(rec.n - 2, rec.n) * r) < 1:
            continue
        out.append(rec)
    return out


def _grid_extremes(terms: list[TrigPolynomial], base: float, nx: int, ny: int,
                   order_x: int = 0, order_y: int = 0, chunk: int = 256) -> tuple[float, float]:
    """min and max over the nx-by-ny grid of base + sum(terms), differentiated as asked.

    The half spectrum (k >= 0) is transformed along x in column chunks and
    along y in row chunks, so only one complex nx-by-(ny/2+1) array is held.
    """
    half = np.zeros((nx, ny // 2 + 1), dtype=np.complex128)
    for t in terms:
        keep = t.ks >= 0
        c = t.coeffs[:, keep]
        ks = t.ks[keep]
        if order_x:
            c = c * ((2j * np.pi * t.ls) ** order_x)[:, None]
        if order_y:
            c = c * ((2j * np.pi * ks) ** order_y)[None, :]
        # the k = 0 column carries both signs of l; irfft keeps the real part of that column
        np.add.at(half, (t.ls[:, None] % nx, ks[None, :]), c)
    for s in range(0, half.shape[1], chunk):
        half[:, s:s + chunk] = np.fft.ifft(half[:, s:s + chunk], axis=0) * nx
    lo, hi = math.inf, -math.inf
    for s in range(0, nx, chunk):
        block = np.fft.irfft(half[s:s + chunk], n=ny, axis=1) * ny + base
        lo = min(lo, float(block.min()))
        hi = max(hi, float(block.max()))
    return lo, hi


def certify_min(terms: list[TrigPolynomial], phi0: float, grid: tuple[int, int]) -> tuple[float, float]:
    """Lower bound for min phi and upper bound for max phi: grid extremes widened by a slope margin."""
    nx, ny = grid
    too_fine = [nx <= 2 * np.abs(t.ls).max() or ny <= 2 * np.abs(t.ks).max() for t in terms]
    coarse = [t for t, f in zip(terms, too_fine) if not f]
    # terms too fine for this grid are bounded by their coefficient l1 norm
    slack = sum(t.abs_sum() for t, f in zip(terms, too_fine) if f)
    lo, hi = _grid_extremes(coarse, phi0, nx, ny)
    gx = max(abs(v) for v in _grid_extremes(coarse, 0.0, nx, ny, order_x=1))
    gy = max(abs(v) for v in _grid_extremes(coarse, 0.0, nx, ny, order_y=1))
    # every point is within half a cell of a node; a full cell is charged for safety
    margin = gx / nx + gy / ny + slack
    return lo - margin, hi + margin


def certify_grid_for(terms: list[TrigPolynomial], oversample: int = 4) -> tuple[int, int]:
    """Fast FFT sizes at `oversample` times the largest frequency in each axis."""
    mx = max([int(np.abs(t.ls).max()) for t in terms] + [16])
    my = max([int(np.abs(t.ks).max()) for t in terms] + [16])
    return next_fast_len(oversample * mx + 1), next_fast_len(oversample * my + 1)


def assemble_phi(pair: YPair, staircase_scale: float | None = None, radii=None,
                 exponents=None, certify_grid: tuple[int, int] | None = None,
                 eps_budget: float = 0.4, taper: float = 0.0) -> CeilingSpec:
    """Build X_n, Y_n on every usable level and fix phi0 so that the mean is 1.

    `radii` is a list of (rx, ry) per usable level (default (q'_n^2, q'_n^2),
    the nominal disc); `exponents` overrides the DFT grid sizes.
    """
    records = usable_levels(pair)
    if staircase_scale is None:
        staircase_scale = default_staircase_scale(records, eps_budget)
    if staircase_scale <= 0:
        raise InvalidArgument("staircase_scale must be positive")
    levels, xs, ys, used_radii, used_exp = [], [], [], [], []
    for k, rec in enumerate(records):
        g = LevelGeometry(rec, float(staircase_scale * raw_eps(rec)))
        rad = tuple(radii[k]) if radii is not None else (rec.q_prime**2, rec.q_prime**2)
        exp = tuple(exponents[k]) if exponents is not None else g.default_exponents(*rad)
        levels.append(g)
        xs.append(g.truncate_x(rad, exp, taper))
        ys.append(g.truncate_y())
        used_radii.append(rad)
        used_exp.append(exp)
    phi0 = 1 - sum((Fraction(t.constant.real) for t in xs + ys), Fraction(0))
    if not levels:
        return CeilingSpec(pair, Fraction(1), None, [], [], [], staircase_scale, 1.0, 1.0, [], [], taper)
    grid = tuple(certify_grid) if certify_grid else certify_grid_for(xs + ys)
    lo, hi = certify_min(xs + ys, float(phi0), grid)
    if lo <= 0:
        raise NonpositiveCeiling(
            f"certified lower bound {lo:.3g} <= 0; lower staircase_scale (now {staircase_scale:.3g})"
        )
    return CeilingSpec(pair, phi0, records[0].n, levels, xs, ys, staircase_scale, lo, hi,
                       used_radii, used_exp, taper, grid)
