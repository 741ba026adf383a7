"""Best responses, pure Nash verification/enumeration and learning dynamics.

Strategy profiles of ordinal mechanisms are tuples of 0-based item orders;
for cardinal mechanisms they are tuples of reported value rows.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from itertools import combinations_with_replacement, permutations, product

import numpy as np
from sklearn.base import BaseEstimator

from .core import ZERO, CapacityError, ValuationProfile, check_valuations
from .mechanisms import Mechanism, ProbabilisticSerial
from .welfare import anarchy_ratios, optimal_matching, social_welfare

DEFAULT_EVAL_BUDGET = 10**6
DEFAULT_PROFILE_BUDGET = 10**6
DEFAULT_LEARN_MAX_N = 5
DEFAULT_GRID = 8


@dataclass(frozen=True)
class DeviationSpace:
    """The per-agent strategy set a search runs over.

    kind is ``all-strict-orders``, ``top-m-permutations`` (``m``),
    ``explicit-list`` (``strategies``) or ``value-grid`` (``grid`` = D: report
    rows with entries in {0, 1/D, ..., 1} summing to 1; cardinal mechanisms).
    """

    kind: str = "all-strict-orders"
    m: int = None
    strategies: tuple = None
    grid: int = None

    @classmethod
    def top_m(cls, m):
        return cls("top-m-permutations", m=m)

    @classmethod
    def explicit(cls, strategies):
        return cls("explicit-list", strategies=tuple(tuple(s) for s in strategies))

    @classmethod
    def value_grid(cls, grid=DEFAULT_GRID):
        return cls("value-grid", grid=grid)

    def size(self, n):
        if self.kind == "all-strict-orders":
            return math.factorial(n)
        if self.kind == "top-m-permutations":
            return math.factorial(min(self.m, n))
        if self.kind == "explicit-list":
            return len(self.strategies)
        if self.kind == "value-grid":
            return math.comb(self.grid + n - 1, n - 1)
        raise ValueError(f"unknown deviation space {self.kind!r}")

    def candidates(self, current, n):
        """Strategies in lexicographic order (ties in searches go to the first)."""
        if self.kind == "all-strict-orders":
            return permutations(range(n))
        if self.kind == "top-m-permutations":
            head, tail = tuple(current[: self.m]), tuple(current[self.m :])
            return sorted(set(p + tail for p in permutations(head)))
        if self.kind == "explicit-list":
            return sorted(self.strategies)
        if self.kind == "value-grid":
            return _grid_rows(n, self.grid)
        raise ValueError(f"unknown deviation space {self.kind!r}")

    def describe(self):
        if self.kind == "top-m-permutations":
            return f"top-{self.m}-permutations"
        if self.kind == "explicit-list":
            return f"explicit-list({len(self.strategies)})"
        if self.kind == "value-grid":
            return f"value-grid(D={self.grid})"
        return self.kind


ALL_ORDERS = DeviationSpace()


def _grid_rows(n, grid):
    rows = []
    for cuts in combinations_with_replacement(range(grid + 1), n - 1):
        bounds = (0,) + cuts + (grid,)
        rows.append(tuple(Fraction(bounds[k + 1] - bounds[k], grid) for k in range(n)))
    return sorted(rows)


@dataclass(frozen=True)
class EquilibriumReport:
    profile: tuple
    verified: bool
    deviation_space: DeviationSpace
    max_gain: Fraction
    epsilon: Fraction
    welfare: Fraction
    witness: tuple = None  # (agent, strategy) of the best deviation when not verified
    gains: tuple = ()
    opt: Fraction = None
    certification: str = ""

    @property
    def ratio(self):
        if self.opt is None or not self.welfare:
            return None
        return self.opt / self.welfare


def _values(truth):
    return getattr(truth, "values", truth)


def _default_space(mech):
    return ALL_ORDERS if mech.ordinal else DeviationSpace.value_grid()


def _certification(mech, space):
    if mech.ordinal and space.kind == "all-strict-orders":
        return "exhaustive over all strict orders"
    return f"relative to searched space {space.describe()} only"


def expected_utility(mech: Mechanism, truth_row, strategies, agent) -> Fraction:
    """Agent's true values dotted with her row of the mechanism's outcome."""
    row = mech.allocate(tuple(strategies))[agent]
    return sum((p * u for p, u in zip(row, truth_row) if p), ZERO)


def best_response(mech, truth_row, strategies, agent, space=None, budget=DEFAULT_EVAL_BUDGET):
    """Exhaustive best response of ``agent`` with the others held fixed.

    Returns ``(strategy, utility)``; among maximizers the lexicographically
    smallest strategy wins.
    """
    space = space or _default_space(mech)
    strategies = tuple(strategies)
    n = len(strategies)
    size = space.size(n)
    if size > budget:
        raise CapacityError(f"deviation space has {size} strategies, budget is {budget}")
    if mech.ordinal and space.kind == "all-strict-orders":
        fast = mech.best_deviation(strategies, agent, tuple(truth_row))
        if fast is not None:
            return fast
    best = None
    trial = list(strategies)
    for s in space.candidates(strategies[agent], n):
        trial[agent] = s
        u = expected_utility(mech, truth_row, trial, agent)
        if best is None or u > best[1]:
            best = (tuple(s), u)
    return best


def verify_pure_nash(
    mech, truth, strategies, space=None, epsilon=0, budget=DEFAULT_EVAL_BUDGET, opt=None
) -> EquilibriumReport:
    """Check that no single agent gains more than ``epsilon`` by deviating."""
    space = space or _default_space(mech)
    epsilon = Fraction(epsilon)
    values = _values(truth)
    strategies = tuple(tuple(s) for s in strategies)
    p = mech.allocate(strategies)
    current = [sum((q * u for q, u in zip(p[i], values[i]) if q), ZERO) for i in range(len(values))]
    gains = []
    witness = None
    best_gain = None
    for i in range(len(values)):
        s, u = best_response(mech, values[i], strategies, i, space, budget)
        gain = u - current[i]
        gains.append(gain)
        if best_gain is None or gain > best_gain:
            best_gain = gain
            witness = (i, s)
    verified = best_gain <= epsilon
    if opt is None:
        _, opt = optimal_matching(values)
    return EquilibriumReport(
        profile=strategies,
        verified=verified,
        deviation_space=space,
        max_gain=best_gain,
        epsilon=epsilon,
        welfare=sum(current, ZERO),
        witness=None if verified else witness,
        gains=tuple(gains),
        opt=opt,
        certification=_certification(mech, space),
    )


# --- payoff tensors ---------------------------------------------------------------

_TENSOR_CACHE = {}


def _mechanism_key(mech):
    return (type(mech).__name__, tuple(sorted(mech.get_params().items())))


def _strategy_list(mech, n, space):
    if space.kind == "top-m-permutations":
        raise ValueError("enumeration needs a fixed per-agent strategy set")
    if not mech.ordinal and space.kind == "all-strict-orders":
        raise ValueError("cardinal mechanisms need an explicit-list or value-grid space")
    return [tuple(s) for s in space.candidates(None, n)]


def _rescale(num, den):
    lcm = reduce(math.lcm, set(den.tolist()), 1)
    if lcm >= 2**40:
        num = num.astype(object)
        return num * (lcm // den.astype(object))[:, None, None], lcm
    return num * (lcm // den)[:, None, None], lcm


def _matrix_ints(p):
    den = 1
    for row in p:
        for x in row:
            den = math.lcm(den, x.denominator)
    return [[x.numerator * (den // x.denominator) for x in row] for row in p], den


def allocation_tensor(mech, n, strategies):
    """Every profile's assignment matrix as integer numerators over one denominator.

    Returns ``(P, L)`` with ``P`` of shape (m**n, n, n), profiles in
    row-major order of strategy indices. Anonymous mechanisms are evaluated
    once per multiset of strategies.
    """
    key = (_mechanism_key(mech), n, tuple(strategies))
    if key in _TENSOR_CACHE:
        return _TENSOR_CACHE[key]
    m = len(strategies)
    total = m**n
    num = np.zeros((total, n, n), dtype=np.int64)
    den = np.ones(total, dtype=np.int64)
    strides = [m ** (n - 1 - a) for a in range(n)]
    if mech.anonymous:
        for combo in combinations_with_replacement(range(m), n):
            ints, d = _matrix_ints(mech.allocate(tuple(strategies[c] for c in combo)))
            ints = np.array(ints, dtype=np.int64)
            seen = set()
            for perm in permutations(range(n)):
                idx = sum(combo[perm[a]] * strides[a] for a in range(n))
                if idx in seen:
                    continue
                seen.add(idx)
                num[idx] = ints[list(perm)]
                den[idx] = d
    else:
        for idx, combo in enumerate(product(range(m), repeat=n)):
            ints, d = _matrix_ints(mech.allocate(tuple(strategies[c] for c in combo)))
            num[idx] = ints
            den[idx] = d
    result = _rescale(num, den)
    _TENSOR_CACHE[key] = result
    return result


def _utility_tensors(P, L, values):
    """Per-agent integer utilities ``U[i]`` (flat over profiles) and their scale."""
    n = len(values)
    out = []
    for i in range(n):
        d = 1
        for v in values[i]:
            d = math.lcm(d, Fraction(v).denominator)
        u = [int(Fraction(v) * d) for v in values[i]]
        bound = int(np.abs(P[:, i, :]).max()) * max(map(abs, u), default=0) * n if len(P) else 0
        if P.dtype == object or bound >= 2**62:
            U = P[:, i, :].astype(object).dot(np.array(u, dtype=object))
        else:
            U = P[:, i, :].dot(np.array(u, dtype=np.int64))
        out.append((U, L * d))
    return out


def enumerate_pure_nash(
    mech, truth, epsilon=0, space=None, budget=DEFAULT_PROFILE_BUDGET
) -> list:
    """All (epsilon-)pure Nash equilibria over the full strategy product.

    Equivalent to running :func:`verify_pure_nash` on every profile, done on
    a precomputed payoff tensor.
    """
    values = _values(truth)
    n = len(values)
    space = space or _default_space(mech)
    strategies = _strategy_list(mech, n, space)
    m = len(strategies)
    if m**n > budget:
        raise CapacityError(
            f"{m}**{n} = {m**n} profiles exceed the enumeration budget {budget}; "
            "use best_response_dynamics instead"
        )
    epsilon = Fraction(epsilon)
    P, L = allocation_tensor(mech, n, strategies)
    shape = (m,) * n
    gains = []
    ok = np.ones(shape, dtype=bool)
    utilities = _utility_tensors(P, L, values)
    for i, (U, scale) in enumerate(utilities):
        U = U.reshape(shape)
        g = U.max(axis=i, keepdims=True) - U
        gains.append((g, scale))
        ok &= g * epsilon.denominator <= epsilon.numerator * scale
    _, opt = optimal_matching(values)
    reports = []
    for idx in zip(*np.nonzero(ok)):
        profile = tuple(strategies[c] for c in idx)
        agent_gains = tuple(Fraction(int(g[idx]), scale) for g, scale in gains)
        welfare = sum((Fraction(int(U.reshape(shape)[idx]), scale) for U, scale in utilities), ZERO)
        reports.append(
            EquilibriumReport(
                profile=profile,
                verified=True,
                deviation_space=space,
                max_gain=max(agent_gains),
                epsilon=epsilon,
                welfare=welfare,
                gains=agent_gains,
                opt=opt,
                certification=_certification(mech, space),
            )
        )
    return reports


# --- best-response dynamics ---------------------------------------------------------


@dataclass(frozen=True)
class DynamicsResult:
    profile: tuple
    converged: bool
    iterations: int
    report: EquilibriumReport = None
    steps: tuple = ()  # (agent, new strategy, gain) per accepted improvement


def best_response_dynamics(
    mech,
    truth,
    init,
    max_iters=100,
    agent_order="round-robin",
    seed=None,
    space=None,
    budget=DEFAULT_EVAL_BUDGET,
):
    """Replace one agent's strategy at a time with a strictly better best response.

    An iteration is one pass over all agents (``round-robin``, or a fresh
    permutation per pass for ``seeded-random``). Converged means a full pass
    changed nothing; the final profile is then re-verified.
    """
    values = _values(truth)
    n = len(values)
    space = space or _default_space(mech)
    profile = [tuple(s) for s in init]
    if agent_order == "seeded-random":
        if seed is None:
            raise ValueError("seeded-random agent order needs a seed")
        rng = np.random.default_rng(seed)
    elif agent_order != "round-robin":
        raise ValueError(f"unknown agent order {agent_order!r}")
    steps = []
    converged = False
    iterations = 0
    while iterations < max_iters:
        iterations += 1
        order = range(n) if agent_order == "round-robin" else rng.permutation(n).tolist()
        changed = False
        for i in order:
            current = expected_utility(mech, values[i], profile, i)
            s, u = best_response(mech, values[i], profile, i, space, budget)
            if u > current:
                profile[i] = s
                steps.append((i, s, u - current))
                changed = True
        if not changed:
            converged = True
            break
    profile = tuple(profile)
    report = verify_pure_nash(mech, truth, profile, space, 0, budget) if converged else None
    return DynamicsResult(profile, converged, iterations, report, tuple(steps))


# --- no-regret learning ---------------------------------------------------------


@dataclass
class LearnedDistribution:
    strategies: list
    weights: list  # final mixed strategy per agent (floats)
    history: np.ndarray  # rounds x n strategy indices
    average_regret: tuple  # exact, per agent
    average_welfare: Fraction
    checkpoints: list = field(default_factory=list)  # (round, max average regret)
    learner: str = "regret-matching"
    seed: int = None

    @property
    def average_regret_float(self):
        return tuple(float(r) for r in self.average_regret)

    @property
    def max_regret(self):
        return max(self.average_regret)

    def empirical_distribution(self):
        counts = Counter(map(tuple, self.history.tolist()))
        T = len(self.history)
        return {
            tuple(self.strategies[c] for c in prof): Fraction(k, T) for prof, k in sorted(counts.items())
        }


class _PayoffOracle:
    """Counterfactual payoff vectors, from a tensor when it fits in the budget."""

    def __init__(self, mech, values, strategies, tensor_budget):
        self.mech = mech
        self.values = values
        self.strategies = strategies
        n = len(values)
        m = len(strategies)
        self.n, self.m = n, m
        self.strides = np.array([m ** (n - 1 - a) for a in range(n)], dtype=np.int64)
        self.scales = []
        if m**n <= tensor_budget:
            P, L = allocation_tensor(mech, n, strategies)
            self.U = []
            for U, scale in _utility_tensors(P, L, values):
                self.U.append(U)
                self.scales.append(scale)
            self.W_scale = math.lcm(*self.scales)
            self.W = sum(U * (self.W_scale // s) for U, s in zip(self.U, self.scales))
        else:
            self.U = None
            self._cache = {}
            self.scales = [1] * n  # payoffs stay exact Fractions

    def counterfactual(self, i, idx):
        if self.U is not None:
            base = int(np.dot(idx, self.strides)) - idx[i] * self.strides[i]
            return self.U[i][base + np.arange(self.m) * self.strides[i]]
        out = []
        trial = [self.strategies[c] for c in idx]
        for c in range(self.m):
            trial[i] = self.strategies[c]
            key = tuple(int(x) for x in idx[:i]) + (c,) + tuple(int(x) for x in idx[i + 1 :])
            if key not in self._cache:
                self._cache[key] = self.mech.allocate(tuple(trial))
            row = self._cache[key][i]
            out.append(sum((p * Fraction(v) for p, v in zip(row, self.values[i])), ZERO))
        return np.array(out, dtype=object)

    def welfare(self, idx):
        if self.U is not None:
            return Fraction(int(self.W[int(np.dot(idx, self.strides))]), self.W_scale)
        key = tuple(int(x) for x in idx)
        p = self._cache.get(key) or self.mech.allocate(tuple(self.strategies[c] for c in idx))
        return social_welfare(self.values, p)


def _exact(x):
    return x if isinstance(x, Fraction) else Fraction(int(x))


def no_regret_dynamics(
    mech,
    truth,
    rounds,
    seed,
    learner="regret-matching",
    eta=0.1,
    max_n=DEFAULT_LEARN_MAX_N,
    tensor_budget=DEFAULT_PROFILE_BUDGET,
):
    """Independent no-regret learners over all strict orders, full information.

    Each round every agent samples a strategy from her learner; each then
    observes the exact utility of every own strategy against the realized
    opponents. Average external regret is exact (integer-scaled payoffs);
    the learners' weights are floats.
    """
    values = _values(truth)
    n = len(values)
    if n > max_n:
        raise CapacityError(f"learning is capped at n={max_n} ({math.factorial(n)} strategies per agent)")
    if learner not in ("regret-matching", "multiplicative-weights"):
        raise ValueError(f"unknown learner {learner!r}")
    if not mech.ordinal:
        raise ValueError("learning runs over strict orders; use an ordinal mechanism")
    strategies = [tuple(s) for s in ALL_ORDERS.candidates(None, n)]
    m = len(strategies)
    oracle = _PayoffOracle(mech, values, strategies, tensor_budget)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]
    dtype = np.int64 if oracle.U is not None and oracle.U[0].dtype != object else object
    regret = [np.zeros(m, dtype=dtype) for _ in range(n)]
    cum_payoff = [np.zeros(m) for _ in range(n)]
    history = np.zeros((rounds, n), dtype=np.int64)
    welfare_total = ZERO
    checkpoints = []
    marks = {t for t in (10**k for k in range(1, 12)) if t < rounds} | {rounds}
    mixed = [np.full(m, 1.0 / m) for _ in range(n)]
    for t in range(1, rounds + 1):
        idx = np.empty(n, dtype=np.int64)
        for i in range(n):
            if learner == "regret-matching":
                pos = np.maximum(regret[i].astype(float), 0.0)
                s = pos.sum()
                mixed[i] = pos / s if s > 0 else np.full(m, 1.0 / m)
            else:
                z = eta * (cum_payoff[i] / oracle.scales[i])
                z -= z.max()
                w = np.exp(z)
                mixed[i] = w / w.sum()
            cdf = np.cumsum(mixed[i])
            c = int(np.searchsorted(cdf, rngs[i].random() * cdf[-1], side="right"))
            idx[i] = min(c, m - 1)
        history[t - 1] = idx
        for i in range(n):
            v = oracle.counterfactual(i, idx)
            regret[i] += v - v[idx[i]]
            if learner == "multiplicative-weights":
                cum_payoff[i] += v.astype(float)
        if t in marks or t == rounds:
            worst = max(_exact(max(0, regret[i].max())) / (t * int(oracle.scales[i])) for i in range(n))
            checkpoints.append((t, worst))
        welfare_total += oracle.welfare(idx)
    average_regret = tuple(_exact(max(0, regret[i].max())) / (rounds * int(oracle.scales[i])) for i in range(n))
    return LearnedDistribution(
        strategies=strategies,
        weights=[w.copy() for w in mixed],
        history=history,
        average_regret=average_regret,
        average_welfare=welfare_total / rounds,
        checkpoints=checkpoints,
        learner=learner,
        seed=seed,
    )


# --- estimator front ends ------------------------------------------------------


class PureNashSearch(BaseEstimator):
    """Find pure Nash equilibria of a mechanism on a true valuation profile.

    ``method="enumerate"`` scans the whole strategy product;
    ``method="brd"`` runs best-response dynamics from ``init`` (truthful
    reports by default). After ``fit``: ``equilibria_``, ``optimal_welfare_``,
    ``price_of_anarchy_`` and ``price_of_stability_`` (both measured over the
    equilibria found).
    """

    def __init__(
        self,
        mechanism=None,
        method="enumerate",
        epsilon=0,
        space=None,
        init=None,
        max_iters=100,
        budget=DEFAULT_PROFILE_BUDGET,
    ):
        self.mechanism = mechanism
        self.method = method
        self.epsilon = epsilon
        self.space = space
        self.init = init
        self.max_iters = max_iters
        self.budget = budget

    def fit(self, X, y=None):
        truth = check_valuations(X)
        mech = self.mechanism if self.mechanism is not None else ProbabilisticSerial()
        if self.method == "enumerate":
            self.equilibria_ = enumerate_pure_nash(mech, truth, self.epsilon, self.space, self.budget)
        elif self.method == "brd":
            init = self.init
            if init is None:
                init = truth.induced_profile() if mech.ordinal else truth.values
            result = best_response_dynamics(mech, truth, init, self.max_iters, space=self.space)
            self.dynamics_ = result
            self.equilibria_ = [result.report] if result.report is not None and result.report.verified else []
        else:
            raise ValueError(f"unknown method {self.method!r}")
        _, self.optimal_welfare_ = optimal_matching(truth.values)
        welfares = [r.welfare for r in self.equilibria_]
        if welfares and min(welfares) > 0:
            self.price_of_anarchy_, self.price_of_stability_ = anarchy_ratios(self.optimal_welfare_, welfares)
        else:
            self.price_of_anarchy_ = self.price_of_stability_ = None
        return self


class NoRegretLearner(BaseEstimator):
    """Estimator front end for :func:`no_regret_dynamics`."""

    def __init__(self, mechanism=None, rounds=10_000, seed=0, learner="regret-matching", eta=0.1):
        self.mechanism = mechanism
        self.rounds = rounds
        self.seed = seed
        self.learner = learner
        self.eta = eta

    def fit(self, X, y=None):
        truth = check_valuations(X)
        mech = self.mechanism if self.mechanism is not None else ProbabilisticSerial()
        self.distribution_ = no_regret_dynamics(
            mech, truth, self.rounds, self.seed, self.learner, self.eta
        )
        self.average_regret_ = self.distribution_.average_regret
        self.average_welfare_ = self.distribution_.average_welfare
        return self


def truthful_profile(truth: ValuationProfile):
    return truth.induced_profile()
