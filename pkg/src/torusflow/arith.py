"""Continued fractions, distance to the nearest integer, and orbit arithmetic.

Irrationals are carried as partial-quotient prefixes. Machine floats only
appear at the very end, through `FixedAngle`, whose three-limb split keeps
{m*alpha} accurate to ~1e-16 for every m below 2**26.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import mpmath
import numpy as np

from .errors import InvalidArgument, PrecisionError

GUARD_BITS = 8
LIMB_BITS = 26
MAX_FIXED_ITERATE = 2**LIMB_BITS


def cf_convergents(quotients: Sequence[int]) -> list[tuple[int, int]]:
    """Convergents p_n/q_n of [a0; a1, a2, ...] by the three-term recurrence."""
    if len(quotients) == 0:
        raise InvalidArgument("empty quotient list")
    a = [int(v) for v in quotients]
    if a[0] < 0 or any(v < 1 for v in a[1:]):
        raise InvalidArgument(f"invalid partial quotients {a}")
    p_prev, p = 1, a[0]
    q_prev, q = 0, 1
    out = [(p, q)]
    for an in a[1:]:
        p_prev, p = p, an * p + p_prev
        q_prev, q = q, an * q + q_prev
        out.append((p, q))
    return out


def dist_to_int(x):
    """|||x|||, the distance from x to the closest integer.

    Works on ints, floats, Fractions and mpmath numbers, keeping the type.
    """
    if isinstance(x, mpmath.mpf):
        f = mpmath.frac(x)
        return min(f, 1 - f)
    if isinstance(x, (int, Fraction)):
        f = Fraction(x) - math.floor(x)
        return min(f, 1 - f)
    if isinstance(x, np.ndarray):
        f = x - np.floor(x)
        return np.minimum(f, 1.0 - f)
    f = x - math.floor(x)
    return min(f, 1.0 - f)


@dataclass(frozen=True)
class CFNumber:
    quotients: tuple[int, ...]
    convergents: tuple[tuple[int, int], ...] = field(repr=False)
    precision_bits: int = 256

    @classmethod
    def from_quotients(cls, quotients: Iterable[int], precision_bits: int = 256) -> "CFNumber":
        qs = tuple(int(v) for v in quotients)
        return cls(qs, tuple(cf_convergents(qs)), precision_bits)

    def __post_init__(self):
        if self.precision_bits < 1:
            raise InvalidArgument("precision_bits must be positive")

    def p(self, n: int) -> int:
        return self.convergents[n][0]

    def q(self, n: int) -> int:
        return self.convergents[n][1]

    @property
    def exact(self) -> Fraction:
        """The represented value as an exact rational (midpoint of the last two convergents)."""
        if len(self.convergents) < 2:
            p, q = self.convergents[-1]
            return Fraction(p, q)
        (p0, q0), (p1, q1) = self.convergents[-2:]
        return (Fraction(p0, q0) + Fraction(p1, q1)) / 2

    def value(self, bits: int | None = None):
        return cf_value(self, self.precision_bits if bits is None else bits)

    def angle(self) -> "FixedAngle":
        return FixedAngle.from_fraction(self.exact)


def cf_value(cf: CFNumber, bits: int):
    """High-precision value of `cf` as an mpmath number with `bits` of mantissa.

    The tail beyond the stored quotients is unknown, so the value is taken to be
    the midpoint of the final two convergents; it lies strictly between them and
    within 1/q_N**2 of p_N/q_N.
    """
    if len(cf.convergents) < 2:
        raise InvalidArgument("need at least two convergents")
    (_, q0), (_, q1) = cf.convergents[-2:]
    scale = abs(cf.quotients[0]) + 1
    # the gap 1/(q0 q1) must clear the working ulp with GUARD_BITS to spare
    if Fraction(scale * 2**GUARD_BITS, 2**bits) >= Fraction(1, q0 * q1):
        raise PrecisionError(
            f"{bits} bits cannot separate convergents with denominators {q0} and {q1}"
        )
    mid = cf.exact
    with mpmath.workprec(bits):
        return mpmath.mpf(mid.numerator) / mid.denominator


@dataclass(frozen=True)
class PrecisionPolicy:
    bits: int
    max_iterate: int

    def __post_init__(self):
        if self.bits < 1 or self.max_iterate < 1:
            raise InvalidArgument("bits and max_iterate must be positive")

    @staticmethod
    def required_bits(max_iterate: int, max_q: int) -> int:
        return math.ceil(math.log2(max(max_iterate, 2))) + math.ceil(math.log2(max(max_q, 2))) + 64

    @classmethod
    def for_schedule(cls, max_iterate: int, max_q: int) -> "PrecisionPolicy":
        return cls(cls.required_bits(max_iterate, max_q), max_iterate)

    def admits(self, max_q: int) -> bool:
        return self.bits >= self.required_bits(self.max_iterate, max_q)

    def check_iterate(self, m) -> None:
        top = int(np.max(np.abs(m))) if np.ndim(m) else abs(int(m))
        if top > self.max_iterate or top >= MAX_FIXED_ITERATE:
            raise PrecisionError(
                f"iterate {top} exceeds certified range {min(self.max_iterate, MAX_FIXED_ITERATE - 1)}"
            )


@dataclass(frozen=True)
class FixedAngle:
    """A rotation number split into three 26-bit limbs.

    For |m| < 2**26 each m*limb is exact in binary64, so {m*alpha} carries only
    the final rounding plus the ~2**-78 truncation of alpha.
    """

    limbs: tuple[float, float, float]

    @classmethod
    def from_fraction(cls, alpha: Fraction) -> "FixedAngle":
        r = Fraction(alpha) - math.floor(alpha)
        limbs = []
        for k in (1, 2):
            c = Fraction(math.floor(r * 2 ** (LIMB_BITS * k)), 2 ** (LIMB_BITS * k))
            limbs.append(c)
            r -= c
        limbs.append(Fraction(round(r * 2 ** (3 * LIMB_BITS)), 2 ** (3 * LIMB_BITS)))
        return cls(tuple(float(c) for c in limbs))

    @property
    def value(self) -> float:
        return self.limbs[0] + self.limbs[1] + self.limbs[2]

    def frac_multiple(self, m):
        """{m * alpha} for integer m (scalar or array), |m| < 2**26."""
        m_arr = np.asarray(m)
        if m_arr.size and int(np.max(np.abs(m_arr))) >= MAX_FIXED_ITERATE:
            raise PrecisionError("iterate beyond the fixed-angle range")
        mf = np.abs(m_arr).astype(np.float64)
        c0, c1, c2 = self.limbs
        r = np.mod(mf * c0, 1.0)
        r = np.mod(r + np.mod(mf * c1, 1.0), 1.0)
        r = np.mod(r + mf * c2, 1.0)
        r = np.where(m_arr < 0, np.mod(-r, 1.0), r)
        return float(r) if np.ndim(m) == 0 else r
