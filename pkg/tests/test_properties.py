import random
from fractions import Fraction as F
from itertools import permutations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from matchpoa.core import CapacityError, validate_profile
from matchpoa.mechanisms import ProbabilisticSerial, RandomPriority, SerialDictatorship
from matchpoa.properties import (
    check_envy_free,
    check_safe_strategy,
    envy_free_implies_safe,
    exhaustive_profiles,
    top_deviation_time_check,
    ps_bounds_suite,
    random_profiles,
    random_valuations,
    sd_dominates,
    truthful_safety,
)

PS, RP = ProbabilisticSerial(), RandomPriority()


def distributions(n):
    return st.lists(st.integers(0, 10), min_size=n, max_size=n).filter(sum).map(
        lambda r: tuple(F(x, sum(r)) for x in r)
    )


def test_sd_examples():
    p = (F(1, 2), F(1, 6), F(1, 3))
    third = (F(1, 3),) * 3
    assert sd_dominates((0, 1, 2), p, p)
    assert sd_dominates((0, 1, 2), (1, 0, 0), third)
    assert sd_dominates((0, 1, 2), p, third)
    with pytest.raises(ValueError):
        sd_dominates((0, 1), (F(1, 2), F(1, 4)), (F(1, 2), F(1, 2)))


@given(st.permutations(range(4)), distributions(4), distributions(4), distributions(4))
def test_sd_is_a_partial_order(order, p, q, r):
    assert sd_dominates(order, p, p)
    if sd_dominates(order, p, q) and sd_dominates(order, q, r):
        assert sd_dominates(order, p, r)
    if sd_dominates(order, p, q) and sd_dominates(order, q, p):
        assert p == q


@given(st.permutations(range(4)), distributions(4), distributions(4),
       st.lists(st.integers(0, 20), min_size=4, max_size=4))
def test_sd_implies_higher_expected_utility(order, p, q, raw):
    # utilities consistent with the order: decreasing along it
    vals = sorted(raw, reverse=True)
    u = [0] * 4
    for rank, item in enumerate(order):
        u[item] = vals[rank]
    if sd_dominates(order, p, q):
        assert sum(a * b for a, b in zip(p, u)) >= sum(a * b for a, b in zip(q, u))


def test_ps_envy_free_exhaustive_n3():
    rep = check_envy_free(PS, exhaustive_profiles(3), "exhaustive")
    assert rep.passed and rep.instances == 216


def test_serial_dictatorship_envy_witness():
    sd = SerialDictatorship()
    rep = check_envy_free(sd, [((0, 1, 2),) * 3])
    assert not rep.passed
    assert any(v[2] == 2 and v[3] == 0 for v in rep.violations)


def test_envy_free_single_agent():
    assert check_envy_free(PS, [((0,),)]).passed


def test_safe_strategy_examples():
    assert truthful_safety(RP, 3).passed
    rep = check_safe_strategy(PS, 0, (0, 1, 2), (0, 1, 2), 3)
    assert rep.passed and rep.instances == 36 and rep.mode == "exhaustive"
    bad = check_safe_strategy(PS, 0, (1, 0), (0, 1), 2)
    assert not bad.passed
    assert ((1, 0), (0, 1)) in [v[0] for v in bad.violations]
    sampled = check_safe_strategy(RP, 1, (0, 1, 2, 3), (0, 1, 2, 3), 4, "sampled", 20, seed=5)
    assert sampled.passed and "not a proof" in sampled.note and sampled.seed == 5
    with pytest.raises(CapacityError):
        check_safe_strategy(PS, 0, (0, 1, 2, 3, 4), (0, 1, 2, 3, 4), 5)


def test_envy_free_implies_safe_for_ps():
    for n in (2, 3):
        rep = envy_free_implies_safe(PS, n)
        assert rep.passed and not rep.note


def test_top_deviation_time_example():
    prefs = ((0, 1, 2), (0, 1, 2), (1, 0, 2))
    ok, before, after = top_deviation_time_check(prefs, 0, (2, 0, 1))
    assert ok and before == 1 and after >= F(1, 4)


def test_suite_on_example_profiles():
    suite = ps_bounds_suite([((0, 1, 2), (0, 1, 2), (1, 0, 2)), ((0, 1), (0, 1))], seed=0)
    assert suite.passed
    assert suite["exhaustion-floor"].instances == 2


def test_suite_random_is_reproducible():
    a = ps_bounds_suite(count=50, seed=7)
    b = ps_bounds_suite(count=50, seed=7)
    assert a.passed and a == b
    with pytest.raises(ValueError):
        ps_bounds_suite()


def test_generators():
    rng = random.Random(0)
    prof = random_valuations(5, rng)
    assert validate_profile(prof)
    assert all(v.denominator > 0 and v > 0 for row in prof for v in row)
    profs = random_profiles(4, 3, seed=9)
    assert profs == random_profiles(4, 3, seed=9)
    assert all(sorted(o) == [0, 1, 2, 3] for prefs in profs for o in prefs)
    assert sum(1 for _ in exhaustive_profiles(2)) == 4 == len(set(permutations(range(2)))) ** 2
