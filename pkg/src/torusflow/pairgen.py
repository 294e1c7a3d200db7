"""Translation pairs (alpha, alpha') with alternating denominator growth.

Level n uses the convergents q_n of alpha and q'_{n-1}, q'_n of alpha'. The
builder extends both continued fractions in turn, so that

    q'_n >= G(q_n),   q_{n+1} >= G(q'_n),   gcd(q_n, q'_{n-1}) = gcd(q_n, q'_n) = 1.

The sign of alpha' - p'_{n-1}/q'_{n-1} is (-1)**(n-1) for any continued
fraction, so it cannot be steered by quotient choice; it is recorded per level
and only levels where it is positive are used by the ceiling construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath

from .arith import CFNumber
from .errors import InfeasibleScale, InvalidArgument

KINDS = ("paper-exponential", "power", "explicit-floor-list")
TAIL_QUOTIENT = 1


@dataclass(frozen=True)
class GrowthLaw:
    kind: str = "power"
    k: float = 2.0
    C: int = 50
    floors: tuple[int, ...] = ()
    exp_budget: int = 40

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown growth law {self.kind!r}")
        if self.kind == "power" and self.k <= 1:
            raise InvalidArgument("power law needs k > 1 so that G(q) > q")

    @classmethod
    def exponential(cls, exp_budget: int = 40) -> "GrowthLaw":
        return cls(kind="paper-exponential", exp_budget=exp_budget)

    @classmethod
    def power(cls, k: float = 2.0, C: int = 50) -> "GrowthLaw":
        return cls(kind="power", k=k, C=C)

    @classmethod
    def explicit(cls, floors: Sequence[int]) -> "GrowthLaw":
        return cls(kind="explicit-floor-list", floors=tuple(int(f) for f in floors))

    def floor(self, q: int, step: int = 0) -> int:
        """Smallest integer D with D >= G(q); `step` indexes the explicit list."""
        if self.kind == "power":
            if float(self.k).is_integer():
                g = q ** int(self.k)
            else:
                with mpmath.workdps(30):
                    g = int(mpmath.ceil(mpmath.mpf(q) ** self.k))
            return max(self.C, g, q + 1)
        if self.kind == "explicit-floor-list":
            f = self.floors[step] if step < len(self.floors) else 0
            return max(f, q + 1)
        bits = int(3 * q * 1.4427) + 80
        with mpmath.workprec(bits):
            man, exp = mpmath.ceil(mpmath.exp(3 * q)).man_exp
        return man << exp if exp >= 0 else man >> -exp

    def holds(self, q: int, target: int, step: int = 0) -> bool:
        """Exact test of target >= G(q)."""
        if self.kind == "paper-exponential":
            # e^{3q} <= target  <=>  3q <= ln(target), decided with ample precision
            bits = target.bit_length() + 80
            with mpmath.workprec(bits):
                return 3 * q <= mpmath.log(target)
        return target >= self.floor(q, step)

    def as_dict(self) -> dict:
        if self.kind == "power":
            return {"kind": self.kind, "k": self.k, "C": self.C}
        if self.kind == "explicit-floor-list":
            return {"kind": self.kind, "floors": list(self.floors)}
        return {"kind": self.kind, "exp_budget": self.exp_budget}


@dataclass(frozen=True)
class LevelRecord:
    n: int
    q: int
    p: int
    q_prime: int
    p_prime: int
    q_prime_prev: int
    p_prime_prev: int
    q_next: int | None
    parity_ok: bool


@dataclass(frozen=True)
class YPair:
    alpha: CFNumber
    alpha_prime: CFNumber
    n0: int
    levels: int
    law: GrowthLaw = field(default_factory=GrowthLaw)

    @property
    def level_indices(self) -> list[int]:
        return list(range(self.n0, self.n0 + self.levels))

    @property
    def alpha_exact(self) -> Fraction:
        return self.alpha.exact

    @property
    def alpha_prime_exact(self) -> Fraction:
        return self.alpha_prime.exact

    def record(self, n: int) -> LevelRecord:
        if n < 1 or n >= len(self.alpha_prime.convergents) or n >= len(self.alpha.convergents):
            raise InvalidArgument(f"level {n} not available in this pair")
        p, q = self.alpha.convergents[n]
        pp, qp = self.alpha_prime.convergents[n]
        ppp, qpp = self.alpha_prime.convergents[n - 1]
        q_next = self.alpha.q(n + 1) if n + 1 < len(self.alpha.convergents) else None
        sign = self.alpha_prime_exact - Fraction(ppp, qpp)
        return LevelRecord(n, q, p, qp, pp, qpp, ppp, q_next, sign > 0)

    @property
    def schedule(self) -> list[LevelRecord]:
        return [self.record(n) for n in self.level_indices]

    @property
    def used_levels(self) -> list[int]:
        return [r.n for r in self.schedule if r.parity_ok]

    def as_dict(self) -> dict:
        return {
            "law": self.law.as_dict(),
            "n0": self.n0,
            "levels": self.levels,
            "alpha_quotients": list(self.alpha.quotients),
            "alpha_prime_quotients": list(self.alpha_prime.quotients),
            "schedule": [
                {"n": r.n, "q": r.q, "q_prime": r.q_prime, "q_prime_prev": r.q_prime_prev,
                 "q_next": r.q_next, "parity_ok": r.parity_ok}
                for r in self.schedule
            ],
        }


DEFAULT_SEED = ((0, 2), (0,))


def _extend(prev2: int, prev1: int, floor: int, ok) -> int:
    """Smallest quotient a >= 1 with a*prev1 + prev2 >= floor and ok(a*prev1 + prev2)."""
    a = max(1, -(-(floor - prev2) // prev1))
    while not ok(a * prev1 + prev2):
        a += 1
    return a


def build_pair(law: GrowthLaw, levels: int, seed=DEFAULT_SEED, precision_bits: int = 256) -> YPair:
    """Extend the seed continued fractions level by level.

    `seed` is (alpha quotients a_0..a_{n0}, alpha' quotients a'_0..a'_{n0-1});
    the first level is n0.
    """
    if levels < 1:
        raise InvalidArgument("levels must be >= 1")
    a = [int(v) for v in seed[0]]
    b = [int(v) for v in seed[1]]
    n0 = len(a) - 1
    if n0 < 1 or len(b) != n0:
        raise InvalidArgument("seed needs len(alpha quotients) = len(alpha' quotients) + 1 >= 2")
    qa = [c[1] for c in CFNumber.from_quotients(a).convergents]
    qb = [c[1] for c in CFNumber.from_quotients(b).convergents]
    if math.gcd(qa[n0], qb[n0 - 1]) != 1:
        raise InvalidArgument(f"seed violates gcd(q_{n0}, q'_{n0 - 1}) = 1")
    step = 0
    for n in range(n0, n0 + levels):
        qn = qa[n]
        if law.kind == "paper-exponential" and qn > law.exp_budget:
            raise InfeasibleScale(
                f"floor e^(3*q_{n}) with q_{n} = {qn} exceeds the exponential budget q <= {law.exp_budget}"
            )
        prev2 = qb[n - 2] if n >= 2 else 0
        floor = law.floor(qn, step)
        step += 1
        ap = _extend(prev2, qb[n - 1], floor, lambda d: math.gcd(d, qn) == 1)
        b.append(ap)
        qb.append(ap * qb[n - 1] + prev2)
        if law.kind == "paper-exponential" and n < n0 + levels - 1 and qb[n] > law.exp_budget:
            raise InfeasibleScale(
                f"floor q_{n + 1} >= e^(3*q'_{n}) with q'_{n} = {qb[n]} would feed a further "
                f"exponential floor; budget is q <= {law.exp_budget}"
            )
        floor = law.floor(qb[n], step)
        step += 1
        an = _extend(qa[n - 1], qn, floor, lambda d: math.gcd(d, qb[n]) == 1)
        a.append(an)
        qa.append(an * qn + qa[n - 1])
    a.append(TAIL_QUOTIENT)
    b.append(TAIL_QUOTIENT)
    return YPair(
        CFNumber.from_quotients(a, precision_bits),
        CFNumber.from_quotients(b, precision_bits),
        n0,
        levels,
        law,
    )


def pair_from_quotients(alpha_quotients, alpha_prime_quotients, n0: int, levels: int,
                        law: GrowthLaw | None = None) -> YPair:
    """Wrap hand-chosen quotient lists without any adjustment (for checks and tests)."""
    return YPair(
        CFNumber.from_quotients(alpha_quotients),
        CFNumber.from_quotients(alpha_prime_quotients),
        n0,
        levels,
        law or GrowthLaw(),
    )


@dataclass
class Verdict:
    n: int
    condition: str
    passed: bool
    detail: str = ""
    informational: bool = False


@dataclass
class PairReport:
    verdicts: list[Verdict]

    @property
    def passed(self) -> bool:
        # the sign convention is recorded, not required
        return all(v.passed for v in self.verdicts if not v.informational)

    def failures(self) -> list[Verdict]:
        return [v for v in self.verdicts if not v.passed]

    def first_good_level(self) -> int | None:
        """Smallest level from which every recorded condition holds."""
        bad = [v.n for v in self.verdicts if not v.passed and not v.informational]
        levels = sorted({v.n for v in self.verdicts})
        good = [n for n in levels if all(b < n for b in bad)]
        return good[0] if good else None


def verify_pair(pair: YPair) -> PairReport:
    out = []
    step = 0
    for n in pair.level_indices:
        r = pair.record(n)
        out.append(Verdict(n, "growth q'_n >= G(q_n)", pair.law.holds(r.q, r.q_prime, step),
                           f"q={r.q} q'={r.q_prime}"))
        step += 1
        if r.q_next is None:
            out.append(Verdict(n, "growth q_{n+1} >= G(q'_n)", True, "vacuous: no successor"))
        else:
            out.append(Verdict(n, "growth q_{n+1} >= G(q'_n)",
                               pair.law.holds(r.q_prime, r.q_next, step), f"q_next={r.q_next}"))
        step += 1
        g1 = math.gcd(r.q, r.q_prime_prev)
        g2 = math.gcd(r.q, r.q_prime)
        out.append(Verdict(n, "gcd(q_n, q'_{n-1}) = 1", g1 == 1, f"gcd={g1}"))
        out.append(Verdict(n, "gcd(q_n, q'_n) = 1", g2 == 1, f"gcd={g2}"))
        out.append(Verdict(n, "alpha' - p'_{n-1}/q'_{n-1} > 0", r.parity_ok, informational=True))
    return PairReport(out)
