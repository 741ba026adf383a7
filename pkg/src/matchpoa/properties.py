"""Stochastic dominance, envy-freeness, safe strategies and the PS inequality suite.

Every comparison is exact. A :class:`PropertyReport` records how its
instances were produced so a run can be repeated.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import permutations, product

from .core import ONE, ZERO, CapacityError, ValuationProfile, check_order
from .mechanisms import _ps

DEFAULT_GRID_G = 1000
DEFAULT_SAFE_CAP = 10**5


@dataclass
class PropertyReport:
    name: str
    instances: int = 0
    mode: str = "explicit"
    seed: int = None
    violations: list = field(default_factory=list)
    note: str = ""

    @property
    def passed(self):
        return not self.violations

    def merge(self, other):
        self.instances += other.instances
        self.violations.extend(other.violations)
        return self


@dataclass
class SuiteReport:
    checks: dict
    seed: int = None

    @property
    def passed(self):
        return all(r.passed for r in self.checks.values())

    def __getitem__(self, name):
        return self.checks[name]


def _check_distribution(p):
    if any(x < 0 for x in p) or sum(p, ZERO) != 1:
        raise ValueError(f"not a probability vector: {tuple(p)}")


def sd_dominates(order, p, q) -> bool:
    """True iff every prefix sum of p along ``order`` is >= that of q."""
    _check_distribution(p)
    _check_distribution(q)
    sp = sq = ZERO
    for j in order:
        sp += p[j]
        sq += q[j]
        if sp < sq:
            return False
    return True


def random_valuations(n, rng, grid=DEFAULT_GRID_G) -> ValuationProfile:
    """Unit-sum profile: each row is n integers from 1..grid divided by their sum."""
    rows = []
    for _ in range(n):
        ints = [rng.randint(1, grid) for _ in range(n)]
        total = sum(ints)
        rows.append(tuple(Fraction(x, total) for x in ints))
    return ValuationProfile(tuple(rows), "unit-sum")


def random_profile(n, rng):
    return tuple(tuple(rng.sample(range(n), n)) for _ in range(n))


def random_profiles(n, count, seed):
    rng = random.Random(seed)
    return [random_profile(n, rng) for _ in range(count)]


def exhaustive_profiles(n):
    return product(permutations(range(n)), repeat=n)


def check_envy_free(mech, profiles, mode="explicit", seed=None) -> PropertyReport:
    """Ordinal ex-ante envy-freeness: p_i sd-dominates p_r under s_i, all i, r."""
    report = PropertyReport("envy-free", mode=mode, seed=seed)
    for k, prefs in enumerate(profiles):
        prefs = tuple(prefs)
        p = mech.allocate(prefs)
        report.instances += 1
        for i, r in permutations(range(len(prefs)), 2):
            if not sd_dominates(prefs[i], p[i], p[r]):
                report.violations.append((k, prefs, i, r, p[i], p[r]))
    return report


def check_safe_strategy(
    mech, agent, strategy, true_order, n=None, opponent_space="exhaustive", count=None, seed=None,
    cap=DEFAULT_SAFE_CAP,
) -> PropertyReport:
    """Does ``strategy`` secure an allocation sd-dominating uniform under ``true_order``?

    ``opponent_space="exhaustive"`` ranges over every ordinal opponent profile
    (a proof for that n); ``"sampled"`` draws ``count`` profiles from ``seed``
    and is evidence only.
    """
    strategy = check_order(strategy)
    n = n or len(strategy)
    uniform = (Fraction(1, n),) * n
    if opponent_space == "exhaustive":
        size = math.factorial(n) ** (n - 1)
        if size > cap:
            raise CapacityError(f"{size} opponent profiles exceed the cap {cap}")
        opponents = product(permutations(range(n)), repeat=n - 1)
        report = PropertyReport("safe-strategy", mode="exhaustive", note="proof over the ordinal opponent space")
    elif opponent_space == "sampled":
        rng = random.Random(seed)
        opponents = (tuple(tuple(rng.sample(range(n), n)) for _ in range(n - 1)) for _ in range(count))
        report = PropertyReport("safe-strategy", mode="sampled", seed=seed, note="sampled evidence, not a proof")
    else:
        raise ValueError(f"unknown opponent space {opponent_space!r}")
    for rest in opponents:
        prefs = rest[:agent] + (strategy,) + rest[agent:]
        row = mech.allocate(prefs)[agent]
        report.instances += 1
        if not sd_dominates(true_order, row, uniform):
            report.violations.append((prefs, agent, row))
    return report


def truthful_safety(mech, n, cap=DEFAULT_SAFE_CAP) -> PropertyReport:
    """Truth-telling is safe for every agent and every true order (exhaustive)."""
    report = PropertyReport("truthful-safe", mode="exhaustive")
    for agent in range(n):
        for order in permutations(range(n)):
            report.merge(check_safe_strategy(mech, agent, order, order, n, cap=cap))
    return report


def envy_free_implies_safe(mech, n) -> PropertyReport:
    """Observed implication: exhaustive envy-freeness at n => truthful safety at n.

    A violation is recorded only when the mechanism is envy-free at n and a
    truthful strategy is nevertheless unsafe.
    """
    ef = check_envy_free(mech, exhaustive_profiles(n), mode="exhaustive")
    report = PropertyReport("envy-free-implies-safe", instances=ef.instances, mode="exhaustive")
    if not ef.passed:
        report.note = "premise fails: mechanism is not envy-free at this n"
        return report
    safe = truthful_safety(mech, n)
    report.instances += safe.instances
    report.violations.extend(safe.violations)
    return report


# --- the PS inequality suite ---------------------------------------------------


def _times_floor(times):
    n = len(times)
    return [(j + 1, t) for j, t in enumerate(sorted(times)) if t < Fraction(j + 1, n)]


def _prefix_floor(order, row):
    n = len(order)
    total = ZERO
    bad = []
    for k, j in enumerate(order, 1):
        total += row[j]
        if total < Fraction(k, n):
            bad.append((k, total))
    return bad


def top_deviation(order, item):
    """``order`` with ``item`` moved to the front."""
    return (item,) + tuple(j for j in order if j != item)


def top_deviation_time_check(prefs, agent, deviation):
    """Exhaustion time of the deviation's top item drops by at most a factor 4."""
    j = deviation[0]
    _, times, _ = _ps(prefs)
    dev = prefs[:agent] + (tuple(deviation),) + prefs[agent + 1 :]
    _, times2, _ = _ps(dev)
    return times2[j] >= times[j] / 4, times[j], times2[j]


def equilibrium_utility_check(truth, prefs):
    """At an equilibrium, each agent's utility is >= t_j * u_ij / 4 for every item j."""
    values = getattr(truth, "values", truth)
    p, times, _ = _ps(prefs)
    bad = []
    for i, row in enumerate(values):
        u = sum((q * v for q, v in zip(p[i], row)), ZERO)
        for j, v in enumerate(row):
            if u < times[j] * v / 4:
                bad.append((i, j, u, times[j] * v / 4))
    return bad


def ps_bounds_suite(
    profiles=None,
    *,
    count=None,
    seed=None,
    nmin=3,
    nmax=5,
    deviations=1,
    equilibria=(),
) -> SuiteReport:
    """Run the PS checks on explicit or random profiles.

    top-deviation-time: top-item deviation keeps t_j >= t_j(s)/4;
    exhaustion-floor: sorted t_(j) >= j/n;
    uniform-dominance: prefix sums along each agent's own report >= k/n;
    mass-conservation: consumed mass equals n * time at every event;
    bistochastic: exact row and column sums.
    ``equilibria`` is an iterable of ``(truth, profile)`` pairs that were
    verified as exact PS equilibria; they get the equilibrium-utility and
    welfare-floor (unit-sum truths) checks.
    """
    rng = random.Random(seed)
    if profiles is None:
        if count is None:
            raise ValueError("give explicit profiles or a count")
        mode = "random"
        profiles = []
        for _ in range(count):
            n = rng.randint(nmin, nmax)
            profiles.append(random_profile(n, rng))
    else:
        mode = "explicit"
        profiles = [tuple(tuple(o) for o in prof) for prof in profiles]
    names = [
        "top-deviation-time",
        "exhaustion-floor",
        "uniform-dominance",
        "mass-conservation",
        "bistochastic",
        "equilibrium-utility",
        "welfare-floor",
    ]
    checks = {name: PropertyReport(name, mode=mode, seed=seed) for name in names}
    for k, prefs in enumerate(profiles):
        n = len(prefs)
        p, times, events = _ps(prefs, trace=True)
        for name in ("exhaustion-floor", "uniform-dominance", "mass-conservation", "bistochastic"):
            checks[name].instances += 1
        bad = _times_floor(times)
        if bad:
            checks["exhaustion-floor"].violations.append((k, prefs, bad))
        for i in range(n):
            bad = _prefix_floor(prefs[i], p[i])
            if bad:
                checks["uniform-dominance"].violations.append((k, prefs, i, bad))
        bad = [(t, mass) for t, mass in events if mass != n * t]
        if bad:
            checks["mass-conservation"].violations.append((k, prefs, bad))
        rows_ok = all(sum(row) == ONE for row in p)
        cols_ok = all(sum(p[i][j] for i in range(n)) == ONE for j in range(n))
        if not (rows_ok and cols_ok) or any(x < 0 for row in p for x in row):
            checks["bistochastic"].violations.append((k, prefs))
        for _ in range(deviations):
            agent = rng.randrange(n)
            item = rng.randrange(n)
            tail = [j for j in range(n) if j != item]
            rng.shuffle(tail)
            deviation = (item,) + tuple(tail)
            ok, before, after = top_deviation_time_check(prefs, agent, deviation)
            checks["top-deviation-time"].instances += 1
            if not ok:
                checks["top-deviation-time"].violations.append((k, prefs, agent, deviation, before, after))
    for k, (truth, prefs) in enumerate(equilibria):
        prefs = tuple(tuple(o) for o in prefs)
        checks["equilibrium-utility"].instances += 1
        bad = equilibrium_utility_check(truth, prefs)
        if bad:
            checks["equilibrium-utility"].violations.append((k, prefs, bad))
        if getattr(truth, "normalization", None) == "unit-sum":
            checks["welfare-floor"].instances += 1
            p, _, _ = _ps(prefs)
            sw = sum((q * v for prow, vrow in zip(p, truth.values) for q, v in zip(prow, vrow)), ZERO)
            if sw < 1:
                checks["welfare-floor"].violations.append((k, prefs, sw))
    return SuiteReport(checks, seed)


__all__ = [
    "PropertyReport",
    "SuiteReport",
    "sd_dominates",
    "check_envy_free",
    "check_safe_strategy",
    "truthful_safety",
    "envy_free_implies_safe",
    "ps_bounds_suite",
    "random_valuations",
    "random_profiles",
    "exhaustive_profiles",
    "top_deviation",
]
