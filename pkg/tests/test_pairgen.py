import math

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torusflow.errors import InfeasibleScale, InvalidArgument
from torusflow.pairgen import GrowthLaw, build_pair, pair_from_quotients, verify_pair


def test_power_law_example():
    pair = build_pair(GrowthLaw.power(2, 50), 2)
    for r in pair.schedule:
        assert r.q >= 2
        assert r.q_prime >= max(50, r.q**2)
        assert r.q_next >= max(50, r.q_prime**2)
        assert math.gcd(r.q, r.q_prime_prev) == 1 and math.gcd(r.q, r.q_prime) == 1
    assert verify_pair(pair).passed


def test_exponential_law_single_level_is_minimal():
    pair = build_pair(GrowthLaw.exponential(), 1)
    r = pair.record(pair.n0)
    assert r.q == 2
    # brute force: the smallest admissible denominator a*q'_0 + q'_{-1} with a >= 1
    floor = int(mpmath.ceil(mpmath.exp(6)))
    assert floor == 404
    cands = [a * 1 + 0 for a in range(1, 1000) if a >= floor and math.gcd(a, r.q) == 1]
    assert r.q_prime == cands[0] == 405  # 404 is even, so coprimality pushes it to 405


def test_exponential_law_is_infeasible_beyond_budget():
    with pytest.raises(InfeasibleScale, match="q"):
        build_pair(GrowthLaw.exponential(), 3, seed=((0, 3), (0,)))


def test_invalid_inputs():
    with pytest.raises(InvalidArgument):
        build_pair(GrowthLaw.power(2, 50), 0)
    with pytest.raises(InvalidArgument):
        GrowthLaw.power(1.0, 5)
    with pytest.raises(InvalidArgument):
        build_pair(GrowthLaw.power(2, 50), 1, seed=((0, 2, 2), (0, 5)))


def test_shared_factor_fails_coprimality():
    # q_2 = 5 and q'_1 = 5
    pair = pair_from_quotients([0, 2, 2, 1], [0, 5, 3, 1], 1, 2)
    assert pair.record(2).q == pair.record(2).q_prime_prev == 5
    rep = verify_pair(pair)
    assert not rep.passed
    assert any(v.n == 2 and v.condition.startswith("gcd(q_n, q'_{n-1})") for v in rep.failures())


def test_last_level_without_successor_is_vacuous():
    pair = pair_from_quotients([0, 2], [0, 60], 1, 1, GrowthLaw.power(2, 50))
    rep = verify_pair(pair)
    succ = [v for v in rep.verdicts if "q_{n+1}" in v.condition]
    assert succ and succ[0].passed and "vacuous" in succ[0].detail


@settings(max_examples=15, deadline=None)
@given(st.sampled_from([2.0, 2.5, 3.0]), st.integers(2, 60), st.integers(1, 3))
def test_builder_output_always_verifies(k, C, levels):
    law = GrowthLaw.power(k, C)
    a = build_pair(law, levels)
    b = build_pair(law, levels)
    assert a.as_dict() == b.as_dict()
    assert verify_pair(a).passed
    for r in a.schedule:
        assert math.gcd(r.q, r.q_prime_prev) == 1


def test_desk_schedule(desk_pair):
    recs = {r.n: r for r in desk_pair.schedule}
    assert (recs[3].q, recs[3].q_prime_prev, recs[3].q_prime) == (3, 2, 31)
    assert (recs[5].q, recs[5].q_prime_prev, recs[5].q_prime, recs[5].q_next) == (35, 33, 7456, 43047)
    assert not recs[4].parity_ok
    assert verify_pair(desk_pair).passed
