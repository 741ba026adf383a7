from fractions import Fraction as F

import pytest

from matchpoa.constructions import (
    ConstructionError,
    ConstructionParams,
    default_delta,
    default_thm5_schedule,
    derive_thm4_prime,
    gen_thm4,
    gen_thm5,
    gen_thm6_pos,
    gen_thm10_unit_range,
    generate,
    groups,
    thm5_strategy,
    verify_construction,
)
from matchpoa.core import validate_profile
from matchpoa.mechanisms import (
    NaiveMaxWelfare,
    ProbabilisticSerial,
    RandomDictatorial,
    RandomPriority,
    naive_max_welfare,
)
from matchpoa.welfare import optimal_matching
from oracles import best_matching, ps_events

PS = ProbabilisticSerial()


def test_gen_thm4_rows():
    u = gen_thm4(2, F(1, 256))
    assert u[0] == (F(1, 4) + F(1, 256),) + (F(1, 4) - F(1, 768),) * 3
    assert u[2][1] == F(1, 4) + F(1, 256)
    assert validate_profile(u)
    assert groups(3) == [[0, 1, 2], [3, 4, 5], [6, 7, 8]]
    assert validate_profile(gen_thm4(3))
    assert gen_thm4(3)[0][0] == F(1, 9) + F(1, 9**4)


def test_gen_thm4_rejects_bad_parameters():
    with pytest.raises(ConstructionError):
        gen_thm4(2, F(1, 64))
    with pytest.raises(ConstructionError):
        gen_thm4(1)


def test_derive_thm4_prime_picks_lowest_index_on_ties():
    u = gen_thm4(2)
    p = PS.allocate(u.induced_profile())
    u2, selected = derive_thm4_prime(u, p, 2)
    assert selected == [0, 2]
    assert u2[0] == (1, 0, 0, 0) and u2[2] == (0, 1, 0, 0)
    assert u2[1] == u[1] and u2[3] == u[3]
    assert all(p[i][j] <= F(1, 2) for j, i in enumerate(selected))
    assert validate_profile(u2)


def test_gen_thm5():
    u, u2 = gen_thm5(4)
    row = u[0]
    assert row[0] == F(1, 4) + F(1, 64)
    assert all(a > b > 0 for a, b in zip(row, row[1:])) and sum(row) == 1
    assert u2[0] == row
    eps = default_thm5_schedule(4)
    assert u2[2][1] == 1 - sum(eps)
    assert [u2[2][j] for j in (0, 2, 3)] == list(eps)
    assert all(e <= F(1, 64) for e in eps) and sum(eps) == F(1, 64)
    assert validate_profile(u) and validate_profile(u2)
    assert naive_max_welfare(thm5_strategy(4)) == (0, 1, 2, 3)


def test_gen_thm5_rejects_bad_schedules():
    with pytest.raises(ConstructionError):
        gen_thm5(2)
    with pytest.raises(ConstructionError):
        gen_thm5(4, (F(1, 200), F(1, 100), F(1, 300)))
    with pytest.raises(ConstructionError):
        gen_thm5(4, (F(1, 64), F(1, 128), F(1, 256)))


def test_gen_thm6():
    u = gen_thm6_pos(4, 2)
    half = F(1, 2)
    assert u.values == ((1, 0, 0, 0), (0, 1, 0, 0), (half, half, 0, 0), (half, half, 0, 0))
    assert optimal_matching(u)[1] == 2 == best_matching(u.values)[1]
    assert gen_thm6_pos(9) == gen_thm6_pos(9, 3)
    assert validate_profile(u)
    with pytest.raises(ConstructionError):
        gen_thm6_pos(4, 4)


def test_gen_thm10():
    u = gen_thm10_unit_range(3, F(3, 5))
    assert u[0] == (1, F(9, 25), F(9, 25), F(9, 25), 0, 0, 0, 0, 0)
    assert u[5] == (1, F(27, 125), F(27, 125), F(27, 125), 0, 0, 0, 0, 0)
    assert validate_profile(u)
    assert optimal_matching(u)[1] == 3 * F(9, 25) + 1
    assert default_delta(9) == F(3, 5)
    with pytest.raises(ConstructionError):
        gen_thm10_unit_range(3, F(1, 2))
    with pytest.raises(ConstructionError):
        gen_thm10_unit_range(3, F(1))


def test_params_and_generate():
    with pytest.raises(ConstructionError):
        ConstructionParams("thm99")
    with pytest.raises(ConstructionError):
        generate(ConstructionParams("thm4-general", n=5))
    assert generate(ConstructionParams("thm4-general", n=4)) == gen_thm4(2)


def test_thm6_ps_truthful_welfare_matches_event_oracle():
    u = gen_thm6_pos(4, 2)
    rep = verify_construction(PS, ConstructionParams("thm6-pos", n=4, k=2))
    p, _ = ps_events(u.induced_profile())
    expected = sum(q * v for prow, vrow in zip(p, u) for q, v in zip(prow, vrow))
    assert rep.status == "verified"
    assert rep.welfare == expected == F(4, 3)
    assert rep.opt == 2 and rep.ratio == F(3, 2)


def test_thm6_random_dictatorial_truthful():
    rep = verify_construction(RandomDictatorial(), ConstructionParams("thm6-pos", n=4, k=2))
    assert rep.status == "verified" and rep.welfare == F(5, 4) and rep.ratio == F(8, 5)


def test_thm4_pipeline_small():
    for mech in (PS, RandomPriority()):
        rep = verify_construction(mech, ConstructionParams("thm4-general", k=2))
        assert rep.status == "verified", rep.notes
        assert rep.equilibria["u"].verified and rep.equilibria["u_prime"].verified
        assert rep.welfare <= 3 and rep.opt >= 2 and rep.ratio >= rep.predicted_bound


def test_thm5_pipeline_n4():
    rep = verify_construction(NaiveMaxWelfare(), ConstructionParams("thm5-deterministic", n=4))
    assert rep.status == "verified"
    assert rep.welfare <= F(1, 2) and rep.opt >= 2 and rep.ratio >= 4
    assert "value-grid(D=8)" in rep.notes[0]


def test_thm10_pipeline_small():
    rep = verify_construction(PS, ConstructionParams("thm10-unit-range", k=2))
    assert rep.status == "verified"
    assert rep.equilibria["u"].epsilon == default_delta(4)
    assert rep.welfare <= 1 + 3 * 2 * default_delta(4) ** 3


def test_inconclusive_when_budget_is_too_small():
    rep = verify_construction(PS, ConstructionParams("thm4-general", k=2), budget=5)
    assert rep.status == "inconclusive" and "budget" in rep.notes[0]
    rep = verify_construction(PS, ConstructionParams("thm6-pos", n=4), "brd-search", max_iters=0)
    assert rep.status == "inconclusive"


def test_explicit_candidate():
    u = gen_thm6_pos(4, 2)
    rep = verify_construction(PS, ConstructionParams("thm6-pos", n=4), "explicit", profile=u.induced_profile())
    assert rep.status == "verified"
    with pytest.raises(ValueError):
        verify_construction(PS, ConstructionParams("thm6-pos", n=4), "explicit")
