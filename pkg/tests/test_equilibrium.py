import random
from fractions import Fraction as F
from itertools import permutations, product

import pytest
from hypothesis import given
from hypothesis import strategies as st

from matchpoa.core import CapacityError, ValuationProfile
from matchpoa.equilibrium import (
    DeviationSpace,
    NoRegretLearner,
    PureNashSearch,
    best_response,
    best_response_dynamics,
    enumerate_pure_nash,
    expected_utility,
    no_regret_dynamics,
    verify_pure_nash,
)
from matchpoa.mechanisms import (
    NaiveMaxWelfare,
    ProbabilisticSerial,
    RandomDictatorial,
    RandomPriority,
)
from matchpoa.properties import ps_bounds_suite, random_valuations
from oracles import is_nash_brute

PS, RP, RD = ProbabilisticSerial(), RandomPriority(), RandomDictatorial()
TRUTH2 = ValuationProfile(((F(3, 4), F(1, 4)), (F(2, 3), F(1, 3))))


def unit_sum(n):
    row = st.lists(st.integers(1, 12), min_size=n, max_size=n).map(lambda r: tuple(F(x, sum(r)) for x in r))
    return st.lists(row, min_size=n, max_size=n).map(lambda rs: ValuationProfile(tuple(rs)))


def test_expected_utility_examples():
    assert expected_utility(PS, (F(3, 4), F(1, 4)), ((0, 1), (0, 1)), 0) == F(1, 2)
    assert expected_utility(PS, (F(3, 4), F(1, 4)), ((1, 0), (0, 1)), 0) == F(1, 4)
    assert expected_utility(RP, (0, 0, 0), ((0, 1, 2), (1, 0, 2), (2, 1, 0)), 1) == 0


def test_best_response_examples():
    assert best_response(PS, (F(3, 4), F(1, 4)), ((1, 0), (0, 1)), 0) == ((0, 1), F(1, 2))
    only = DeviationSpace.explicit([(2, 0, 1)])
    prefs = ((2, 0, 1), (0, 1, 2), (1, 2, 0))
    assert best_response(RP, (F(1, 2), F(1, 3), F(1, 6)), prefs, 0, only)[0] == (2, 0, 1)
    assert best_response(PS, (F(1, 2), F(1, 2)), ((1, 0), (1, 0)), 0)[0] == (0, 1)


def test_best_response_budget():
    with pytest.raises(CapacityError):
        best_response(PS, (1, 0, 0, 0), ((0, 1, 2, 3),) * 4, 0, budget=10)


def test_verify_examples():
    rep = verify_pure_nash(PS, TRUTH2, ((0, 1), (0, 1)))
    assert rep.verified and rep.max_gain == 0 and rep.witness is None
    assert rep.certification == "exhaustive over all strict orders"
    rep = verify_pure_nash(PS, TRUTH2, ((1, 0), (0, 1)))
    assert not rep.verified
    assert rep.witness == (0, (0, 1)) and rep.max_gain == F(1, 4)
    assert verify_pure_nash(RP, TRUTH2, ((0, 1), (0, 1))).verified


def test_epsilon_threshold_is_inclusive():
    prefs = ((1, 0), (0, 1))
    assert not verify_pure_nash(PS, TRUTH2, prefs, epsilon=F(1, 5)).verified
    assert verify_pure_nash(PS, TRUTH2, prefs, epsilon=F(1, 4)).verified


@pytest.mark.parametrize("mech", [PS, RP, RD], ids=["ps", "rp", "rd"])
@given(truth=unit_sum(3), data=st.data())
def test_verify_agrees_with_double_loop(mech, truth, data):
    orders = list(permutations(range(3)))
    prefs = tuple(data.draw(st.sampled_from(orders)) for _ in range(3))
    assert verify_pure_nash(mech, truth, prefs).verified == is_nash_brute(mech, truth.values, prefs)


@pytest.mark.parametrize("mech", [PS, RP, RD], ids=["ps", "rp", "rd"])
def test_enumeration_is_exactly_the_verified_set(mech):
    truth = ValuationProfile(((F(1, 2), F(1, 3), F(1, 6)), (F(1, 6), F(1, 2), F(1, 3)), (F(2, 5), F(2, 5), F(1, 5))))
    found = {r.profile for r in enumerate_pure_nash(mech, truth)}
    orders = list(permutations(range(3)))
    brute = {prefs for prefs in product(orders, repeat=3) if is_nash_brute(mech, truth.values, prefs)}
    assert found == brute and found
    for rep in enumerate_pure_nash(mech, truth):
        again = verify_pure_nash(mech, truth, rep.profile)
        assert again.verified and again.welfare == rep.welfare and again.max_gain == rep.max_gain


def test_enumerate_small_cases():
    (rep,) = enumerate_pure_nash(PS, ValuationProfile(((F(1),),)))
    assert rep.verified and rep.welfare == 1
    profiles = {r.profile for r in enumerate_pure_nash(PS, TRUTH2)}
    assert ((0, 1), (0, 1)) in profiles
    truth = ValuationProfile(((F(3, 4), F(1, 4)), (F(1, 3), F(2, 3))))
    rd = {r.profile for r in enumerate_pure_nash(RD, truth)}
    assert rd == {((0, 1), (1, 0))}


def test_enumerate_budget_and_epsilon():
    with pytest.raises(CapacityError):
        enumerate_pure_nash(PS, ValuationProfile(((F(1, 4),) * 4,) * 4), budget=1000)
    assert len(enumerate_pure_nash(PS, TRUTH2, epsilon=1)) == 4


def test_brd_examples():
    res = best_response_dynamics(PS, TRUTH2, ((0, 1), (0, 1)))
    assert res.converged and res.iterations == 1 and res.profile == ((0, 1), (0, 1))
    res = best_response_dynamics(PS, TRUTH2, ((1, 0), (0, 1)))
    assert res.converged and res.profile == ((0, 1), (0, 1)) and len(res.steps) == 1
    assert res.report.verified
    res = best_response_dynamics(PS, TRUTH2, ((1, 0), (0, 1)), max_iters=0)
    assert not res.converged and res.profile == ((1, 0), (0, 1)) and res.report is None


@given(truth=unit_sum(3), seed=st.integers(0, 100))
def test_brd_fixed_points_verify(truth, seed):
    res = best_response_dynamics(PS, truth, truth.induced_profile(), 30, "seeded-random", seed)
    again = best_response_dynamics(PS, truth, truth.induced_profile(), 30, "seeded-random", seed)
    assert res == again
    if res.converged:
        assert res.report.verified
        assert verify_pure_nash(PS, truth, res.profile).verified


def test_ps_equilibria_satisfy_utility_and_welfare_floors():
    truth = ValuationProfile(((F(1, 2), F(1, 3), F(1, 6)), (F(1, 6), F(1, 2), F(1, 3)), (F(2, 5), F(2, 5), F(1, 5))))
    eqs = [(truth, r.profile) for r in enumerate_pure_nash(PS, truth)]
    suite = ps_bounds_suite([], equilibria=eqs)
    assert suite["equilibrium-utility"].instances == len(eqs) > 0
    assert suite["equilibrium-utility"].passed and suite["welfare-floor"].passed


def test_cardinal_verification_on_value_grid():
    truth = ValuationProfile(((F(3, 4), F(1, 4)), (F(2, 3), F(1, 3))))
    rep = verify_pure_nash(NaiveMaxWelfare(), truth, truth.values)
    assert rep.deviation_space.describe() == "value-grid(D=8)"
    assert "only" in rep.certification
    assert DeviationSpace.value_grid(8).size(4) == 165
    assert len(list(DeviationSpace.value_grid(8).candidates(None, 4))) == 165
    assert DeviationSpace.top_m(2).candidates((2, 0, 1), 3) == [(0, 2, 1), (2, 0, 1)]


def test_no_regret_trivial_cases():
    one = no_regret_dynamics(PS, ValuationProfile(((F(1),),)), 5, seed=0)
    assert one.average_regret == (0,)
    flat = ValuationProfile(((F(1, 2), F(1, 2)),) * 2)
    res = no_regret_dynamics(PS, flat, 200, seed=1)
    assert res.average_regret == (0, 0)
    assert all(r == 0 for _, r in res.checkpoints)


def test_no_regret_is_deterministic_and_regret_shrinks():
    truth = ValuationProfile(((F(1, 2), F(1, 3), F(1, 6)), (F(1, 6), F(1, 2), F(1, 3)), (F(2, 5), F(2, 5), F(1, 5))))
    a = no_regret_dynamics(PS, truth, 3000, seed=11)
    b = no_regret_dynamics(PS, truth, 3000, seed=11)
    assert a.average_regret == b.average_regret and (a.history == b.history).all()
    regrets = [r for _, r in a.checkpoints]
    assert regrets[-1] <= regrets[0]
    assert sum(a.empirical_distribution().values()) == 1
    for w in a.weights:
        assert abs(w.sum() - 1) < 1e-9 and (w >= 0).all()
    mw = no_regret_dynamics(PS, truth, 500, seed=2, learner="multiplicative-weights", eta=0.5)
    assert mw.learner == "multiplicative-weights"


def test_no_regret_on_demand_payoffs_match_tensor():
    truth = ValuationProfile(((F(1, 2), F(1, 3), F(1, 6)), (F(1, 6), F(1, 2), F(1, 3)), (F(2, 5), F(2, 5), F(1, 5))))
    a = no_regret_dynamics(RP, truth, 300, seed=4)
    b = no_regret_dynamics(RP, truth, 300, seed=4, tensor_budget=0)
    assert a.average_regret == b.average_regret
    assert a.average_welfare == b.average_welfare


def test_no_regret_limits():
    big = ValuationProfile(((F(1, 6),) * 6,) * 6)
    with pytest.raises(CapacityError):
        no_regret_dynamics(PS, big, 10, seed=0)
    with pytest.raises(ValueError):
        no_regret_dynamics(NaiveMaxWelfare(), TRUTH2, 10, seed=0)


def test_estimators():
    search = PureNashSearch(ProbabilisticSerial()).fit(TRUTH2.values)
    assert search.equilibria_ and search.optimal_welfare_ == F(13, 12)
    assert search.price_of_stability_ <= search.price_of_anarchy_
    brd = PureNashSearch(ProbabilisticSerial(), method="brd").fit(TRUTH2)
    assert brd.dynamics_.converged and len(brd.equilibria_) == 1
    learner = NoRegretLearner(ProbabilisticSerial(), rounds=100, seed=3).fit(TRUTH2)
    assert learner.average_welfare_ == learner.distribution_.average_welfare
    assert learner.get_params()["rounds"] == 100


def test_rp_equilibria_share_the_truthful_allocation():
    rng = random.Random(1)
    for _ in range(6):
        truth = random_valuations(3, rng)
        truthful = RP.allocate(truth.induced_profile())
        eqs = enumerate_pure_nash(RP, truth)
        assert eqs and all(RP.allocate(r.profile) == truthful for r in eqs)
