"""Adversarial instance families and end-to-end audits against concrete mechanisms.

Families:

``thm4-general``   k groups of k agents, each group slightly prefers its own item.
``thm5-deterministic``  identical strictly decreasing rows, plus the swapped profile
                   in which agent i (i >= 1) almost only wants item i-1.
``thm6-pos``       k single-minded agents plus n-k agents splitting value over items 0..k-1.
``thm10-unit-range``  unit-range profile with a small important set.

Agents and items are 0-based; group j (0-based) is agents j*k .. j*k+k-1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .core import ONE, ZERO, CapacityError, ValuationProfile, validate_profile
from .equilibrium import (
    DeviationSpace,
    best_response_dynamics,
    enumerate_pure_nash,
    verify_pure_nash,
)
from .welfare import anarchy_ratios, optimal_matching, social_welfare

FAMILIES = ("thm4-general", "thm5-deterministic", "thm6-pos", "thm10-unit-range")


class ConstructionError(ValueError):
    pass


@dataclass(frozen=True)
class ConstructionParams:
    family: str
    n: int = None
    k: int = None
    alpha: Fraction = None
    eps_schedule: tuple = None
    delta: Fraction = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConstructionError(f"unknown family {self.family!r}; choose from {FAMILIES}")


@dataclass
class ConstructionReport:
    family: str
    mechanism: str
    params: ConstructionParams
    profiles: dict = field(default_factory=dict)
    equilibria: dict = field(default_factory=dict)  # label -> EquilibriumReport or list of them
    welfare: Fraction = None
    opt: Fraction = None
    ratio: Fraction = None
    predicted_bound: Fraction = None
    checks: dict = field(default_factory=dict)
    status: str = "inconclusive"
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return self.status == "verified"


# --- generators ---------------------------------------------------------------------


def groups(k):
    return [list(range(j * k, (j + 1) * k)) for j in range(k)]


def gen_thm4(k, alpha=None) -> ValuationProfile:
    """Group j values item j at 1/n + alpha and every other item at 1/n - alpha/(n-1)."""
    if k < 2:
        raise ConstructionError("need k >= 2")
    n = k * k
    alpha = Fraction(1, n**4) if alpha is None else Fraction(alpha)
    if not 0 < alpha < Fraction(1, n**3):
        raise ConstructionError(f"alpha must lie in (0, 1/n^3) = (0, 1/{n**3}), got {alpha}")
    high = Fraction(1, n) + alpha
    low = Fraction(1, n) - alpha / (n - 1)
    rows = []
    for j, members in enumerate(groups(k)):
        row = tuple(high if item == j else low for item in range(n))
        rows.extend([row] * len(members))
    return ValuationProfile(tuple(rows), "unit-sum")


def derive_thm4_prime(u: ValuationProfile, p, k):
    """Per group pick the member least likely to get the group's item (lowest
    index on ties) and make her single-minded about it.

    Returns ``(u_prime, selected)`` with ``selected[j]`` the agent picked in group j.
    """
    n = u.n
    selected = []
    rows = {}
    for j, members in enumerate(groups(k)):
        i = min(members, key=lambda a: (p[a][j], a))
        selected.append(i)
        rows[i] = tuple(ONE if item == j else ZERO for item in range(n))
    return u.replace_rows(rows), selected


def default_thm5_schedule(n):
    """n-1 strictly decreasing positive values summing to exactly 1/n^3."""
    step = Fraction(2, n**4 * (n - 1))
    return tuple(step * (n - 1 - m) for m in range(n - 1))


def gen_thm5(n, eps_schedule=None):
    """``(u, u_prime)`` for the deterministic-mechanism family.

    u: every agent has the same strictly decreasing row starting at
    1/n + 1/n^3 (tail decreasing in steps of 1/n^4). u_prime: agent 0 keeps
    that row; agent i >= 1 values item i-1 at 1 - sum(eps) and the other
    items, in index order, at the strictly decreasing ``eps_schedule``.
    """
    if n < 3:
        raise ConstructionError("need n >= 3")
    top = Fraction(1, n) + Fraction(1, n**3)
    d = Fraction(1, n**4)
    rest = 1 - top
    c = rest / (n - 1) + d * (n - 2) / 2
    row = (top,) + tuple(c - m * d for m in range(n - 1))
    if not all(a > b for a, b in zip(row, row[1:])) or sum(row) != 1 or row[-1] <= 0:
        raise ConstructionError("tail schedule failed to produce a strictly decreasing unit-sum row")
    eps = default_thm5_schedule(n) if eps_schedule is None else tuple(Fraction(e) for e in eps_schedule)
    cap = Fraction(1, n**3)
    if len(eps) != n - 1:
        raise ConstructionError(f"eps schedule needs {n - 1} values")
    if any(e < 0 or e > cap for e in eps) or not all(a > b for a, b in zip(eps, eps[1:])):
        raise ConstructionError("eps schedule must be strictly decreasing within [0, 1/n^3]")
    if sum(eps) > cap:
        raise ConstructionError("eps schedule must sum to at most 1/n^3")
    u = ValuationProfile((row,) * n, "unit-sum")
    rows = [row]
    for i in range(1, n):
        others = iter(eps)
        rows.append(tuple(1 - sum(eps) if j == i - 1 else next(others) for j in range(n)))
    return u, ValuationProfile(tuple(rows), "unit-sum")


def thm5_strategy(n):
    """Every agent reports all value on her own index, so the identity matching is chosen."""
    return tuple(tuple(ONE if j == i else ZERO for j in range(n)) for i in range(n))


def gen_thm6_pos(n, k=None) -> ValuationProfile:
    """Agents 0..k-1 want only their own item; agents k..n-1 value items 0..k-1 at 1/k."""
    k = math.isqrt(n) if k is None else k
    if not 1 <= k < n:
        raise ConstructionError(f"need 1 <= k < n, got k={k}, n={n}")
    rows = []
    for i in range(n):
        if i < k:
            rows.append(tuple(ONE if j == i else ZERO for j in range(n)))
        else:
            rows.append(tuple(Fraction(1, k) if j < k else ZERO for j in range(n)))
    return ValuationProfile(tuple(rows), "unit-sum")


def default_delta(n):
    """Smallest a/10 in (0, 1) with n > 1/delta^4."""
    for a in range(1, 10):
        delta = Fraction(a, 10)
        if n * delta**4 > 1:
            return delta
    raise ConstructionError(f"no delta = a/10 < 1 satisfies n > 1/delta^4 for n={n}")


def gen_thm10_unit_range(k, delta=None) -> ValuationProfile:
    """Everyone values item 0 at 1; agents 0..k-1 value items 1..k at delta^2,
    the others at delta^3; everything else 0."""
    if k < 2:
        raise ConstructionError("need k >= 2")
    n = k * k
    delta = default_delta(n) if delta is None else Fraction(delta)
    if not 0 < delta < 1:
        raise ConstructionError("delta must lie in (0, 1)")
    if n * delta**4 <= 1:
        raise ConstructionError(f"need n > 1/delta^4; n={n}, 1/delta^4={1 / delta**4}")
    rows = []
    for i in range(n):
        mid = delta**2 if i < k else delta**3
        rows.append(tuple(ONE if j == 0 else mid if 1 <= j <= k else ZERO for j in range(n)))
    return ValuationProfile(tuple(rows), "unit-range")


def generate(params: ConstructionParams):
    """Instance(s) for ``params``: a ValuationProfile, or (u, u') for thm5."""
    f = params.family
    if f == "thm4-general":
        return gen_thm4(_k(params), params.alpha)
    if f == "thm5-deterministic":
        return gen_thm5(params.n, params.eps_schedule)
    if f == "thm6-pos":
        return gen_thm6_pos(params.n, params.k)
    return gen_thm10_unit_range(_k(params), params.delta)


def _k(params):
    if params.k is not None:
        return params.k
    if params.n is None or math.isqrt(params.n) ** 2 != params.n:
        raise ConstructionError(f"{params.family} needs n = k^2")
    return math.isqrt(params.n)


# --- audits -----------------------------------------------------------------------


def _candidate(mech, truth, strategy, explicit, budget, max_iters, space, epsilon=0):
    """A verified equilibrium report, or ``(None, reason)``."""
    if strategy == "explicit":
        if explicit is None:
            raise ValueError("explicit strategy needs a profile")
        init = tuple(explicit)
    else:
        init = truth.induced_profile() if mech.ordinal else truth.values
    if strategy in ("truthful-candidate", "explicit"):
        report = verify_pure_nash(mech, truth, init, space, epsilon, budget)
        return report, None if report.verified else "candidate is not an equilibrium"
    if strategy == "brd-search":
        result = best_response_dynamics(mech, truth, init, max_iters, space=space, budget=budget)
        if not result.converged:
            return None, f"best-response dynamics did not converge in {max_iters} passes"
        report = result.report
        if epsilon and not report.verified:
            report = verify_pure_nash(mech, truth, result.profile, space, epsilon, budget)
        return report, None if report.verified else "dynamics fixed point failed verification"
    raise ValueError(f"unknown equilibrium strategy {strategy!r}")


def _finish(report):
    if report.status == "inconclusive":
        return report
    if report.ratio is not None and report.predicted_bound is not None:
        report.checks["ratio >= predicted bound"] = report.ratio >= report.predicted_bound
    report.status = "verified" if all(report.checks.values()) else "failed"
    return report


def verify_construction(
    mech,
    params: ConstructionParams,
    equilibrium_strategy="truthful-candidate",
    profile=None,
    budget=10**6,
    max_iters=50,
) -> ConstructionReport:
    """Generate the family's profile(s), find and verify an equilibrium, and
    compare measured welfare and ratio against the construction's bound.

    ``equilibrium_strategy`` is ``truthful-candidate``, ``brd-search``,
    ``explicit`` (``profile``) or ``enumerate`` (thm6 only: every pure NE).
    An equilibrium that cannot be verified leaves the report inconclusive.
    """
    report = ConstructionReport(params.family, mech.name, params)
    try:
        if params.family == "thm4-general":
            return _finish(_audit_thm4(mech, params, equilibrium_strategy, profile, budget, max_iters, report))
        if params.family == "thm5-deterministic":
            return _finish(_audit_thm5(mech, params, budget, report))
        if params.family == "thm6-pos":
            return _finish(_audit_thm6(mech, params, equilibrium_strategy, profile, budget, max_iters, report))
        return _finish(_audit_thm10(mech, params, equilibrium_strategy, profile, budget, max_iters, report))
    except CapacityError as exc:
        report.status = "inconclusive"
        report.notes.append(f"budget exhausted: {exc}")
        return report


def _audit_thm4(mech, params, strategy, explicit, budget, max_iters, report):
    k = _k(params)
    n = k * k
    u = gen_thm4(k, params.alpha)
    report.profiles["u"] = u
    eq, why = _candidate(mech, u, strategy, explicit, budget, max_iters, None)
    report.equilibria["u"] = eq
    if why:
        report.notes.append(f"under u: {why}")
        return report
    p = mech.allocate(eq.profile)
    u2, selected = derive_thm4_prime(u, p, k)
    report.profiles["u_prime"] = u2
    report.notes.append(f"selected agents {selected}")
    eq2 = verify_pure_nash(mech, u2, eq.profile, None, 0, budget)
    report.equilibria["u_prime"] = eq2
    if not eq2.verified:
        report.notes.append("same profile is not an equilibrium under u_prime")
        report.status = "failed"
        report.checks["equilibrium under u_prime"] = False
        return report
    report.welfare = social_welfare(u2, p)
    _, report.opt = optimal_matching(u2)
    report.ratio = report.opt / report.welfare
    report.predicted_bound = Fraction(k, 3)
    report.checks["selected p_ij <= 1/sqrt(n)"] = all(p[i][j] <= Fraction(1, k) for j, i in enumerate(selected))
    report.checks["welfare(u') <= 3"] = report.welfare <= 3
    report.checks["opt(u') >= sqrt(n)"] = report.opt >= k
    report.checks["profiles unit-sum"] = bool(validate_profile(u)) and bool(validate_profile(u2))
    report.status = "measured"
    return report


def _audit_thm5(mech, params, budget, report):
    n = params.n
    u, u2 = gen_thm5(n, params.eps_schedule)
    report.profiles.update(u=u, u_prime=u2)
    space = None if mech.ordinal else DeviationSpace.value_grid()
    s = u.induced_profile() if mech.ordinal else thm5_strategy(n)
    eq = verify_pure_nash(mech, u, s, space, 0, budget)
    eq2 = verify_pure_nash(mech, u2, s, space, 0, budget)
    report.equilibria.update(u=eq, u_prime=eq2)
    report.notes.append(f"certification: {eq.certification}")
    if not (eq.verified and eq2.verified):
        report.notes.append("constructed profile failed verification")
        return report
    p = mech.allocate(s)
    report.welfare = social_welfare(u2, p)
    _, report.opt = optimal_matching(u2)
    report.ratio = report.opt / report.welfare
    report.predicted_bound = Fraction(n * (n - 2), 2)
    report.checks["welfare(u') <= 2/n"] = report.welfare <= Fraction(2, n)
    report.checks["opt(u') >= n-2"] = report.opt >= n - 2
    report.checks["profiles unit-sum"] = bool(validate_profile(u)) and bool(validate_profile(u2))
    report.status = "measured"
    return report


def _thm6_agent_floor(p, n, k):
    return all(sum(p[i][:k], ZERO) >= Fraction(k, n) for i in range(k, n))


def _audit_thm6(mech, params, strategy, explicit, budget, max_iters, report):
    n = params.n
    u = gen_thm6_pos(n, params.k)
    k = params.k if params.k is not None else math.isqrt(n)
    report.profiles["u"] = u
    _, report.opt = optimal_matching(u)
    cap = 1 + Fraction(k * k, n)
    if strategy == "enumerate":
        eqs = enumerate_pure_nash(mech, u, 0, None, budget)
        report.equilibria["all"] = eqs
        if not eqs:
            report.notes.append("no pure equilibrium found")
            return report
        welfares = [r.welfare for r in eqs]
        poa, pos = anarchy_ratios(report.opt, welfares)
        report.notes.append(f"{len(eqs)} equilibria; PoA {poa}, PoS {pos}")
        report.welfare = max(welfares)
        report.ratio = pos
        report.checks["every NE welfare <= 1 + k^2/n"] = max(welfares) <= cap
        report.checks["every NE: agents outside the k keep >= k/n of items 0..k-1"] = all(
            _thm6_agent_floor(mech.allocate(r.profile), n, k) for r in eqs
        )
    else:
        eq, why = _candidate(mech, u, strategy, explicit, budget, max_iters, None)
        report.equilibria["u"] = eq
        if why:
            report.notes.append(why)
            return report
        p = mech.allocate(eq.profile)
        report.welfare = eq.welfare
        report.ratio = report.opt / report.welfare
        if mech.name in ("ps", "rp"):
            report.checks["NE welfare <= 1 + k^2/n"] = eq.welfare <= cap
            report.checks["agents outside the k keep >= k/n of items 0..k-1"] = _thm6_agent_floor(p, n, k)
    report.checks["opt == k"] = report.opt == k
    if mech.name in ("ps", "rp"):
        report.predicted_bound = report.opt / cap
    report.status = "measured"
    return report


def _audit_thm10(mech, params, strategy, explicit, budget, max_iters, report):
    k = _k(params)
    n = k * k
    u = gen_thm10_unit_range(k, params.delta)
    delta = default_delta(n) if params.delta is None else Fraction(params.delta)
    report.profiles["u"] = u
    eq, why = _candidate(mech, u, strategy, explicit, budget, max_iters, None, epsilon=delta)
    report.equilibria["u"] = eq
    if why:
        report.notes.append(why)
        return report
    p = mech.allocate(eq.profile)
    _, report.opt = optimal_matching(u)
    report.checks["opt == k*delta^2 + 1"] = report.opt == k * delta**2 + 1
    utility = [sum((q * v for q, v in zip(p[i], u[i])), ZERO) for i in range(n)]
    X = [i for i in range(k) if utility[i] <= delta]
    Y = [i for i in range(k, n) if sum(p[i][: k + 1], ZERO) <= Fraction(4 * (k + 1), n)]
    pairs = list(zip(X, Y))
    report.notes.append(f"X={X} Y={Y}; swapping {len(pairs)} pairs")
    swapped = {}
    for x, y in pairs:
        swapped[x], swapped[y] = u[y], u[x]
    u2 = u.replace_rows(swapped)
    report.profiles["u_swapped"] = u2
    eq2 = verify_pure_nash(mech, u2, eq.profile, None, delta, budget)
    report.equilibria["u_swapped"] = eq2
    if not eq2.verified:
        report.notes.append("profile is not a delta-equilibrium after the swap")
        report.checks["delta-equilibrium after swap"] = False
        report.status = "failed"
        return report
    report.welfare = social_welfare(u2, p)
    report.ratio = report.opt / report.welfare
    bound = 1 + 3 * k * delta**3
    report.checks["opt unchanged by swap"] = optimal_matching(u2)[1] == report.opt
    report.checks["welfare after swap <= 1 + 3k delta^3"] = report.welfare <= bound
    report.checks["profile unit-range"] = bool(validate_profile(u))
    report.predicted_bound = report.opt / bound
    report.status = "measured"
    return report
