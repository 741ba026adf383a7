"""Allocation mechanisms for one-sided matching.

Each mechanism is available both as a plain function and as a small
scikit-learn style estimator (``fit`` validates, ``transform`` returns the
exact :class:`~matchpoa.core.AssignmentMatrix`). The estimator objects are
what the equilibrium and property code passes around as a mechanism id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import permutations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .core import (
    ONE,
    ZERO,
    AssignmentMatrix,
    CapacityError,
    check_order,
    check_preferences,
    check_valuations,
)
from .welfare import max_weight_matching

DEFAULT_MAX_EXACT_N = 8


@dataclass(frozen=True)
class ExhaustionTimes:
    """``t[j]`` is the time item j is fully consumed under PS.

    ``events`` lists ``(time, consumed_mass)`` at every event boundary.
    """

    t: tuple
    events: tuple = ()

    def __getitem__(self, j):
        return self.t[j]

    def __len__(self):
        return len(self.t)

    def sorted(self):
        return tuple(sorted(self.t))


# --- Probabilistic Serial ---------------------------------------------------


def _ps(orders, trace=False):
    n = len(orders)
    remaining = [ONE] * n
    done_at = [None] * n
    cursor = [0] * n
    cur = [o[0] for o in orders]
    start = [ZERO] * n
    p = [[ZERO] * n for _ in range(n)]
    t = ZERO
    events = []
    while True:
        counts = {}
        for j in cur:
            counts[j] = counts.get(j, 0) + 1
        dt = min(remaining[j] / c for j, c in counts.items())
        t += dt
        for j, c in counts.items():
            remaining[j] -= dt * c
            if not remaining[j]:
                done_at[j] = t
        if trace:
            events.append((t, n - sum(remaining)))
        if t == 1:
            for i in range(n):
                p[i][cur[i]] += t - start[i]
            break
        for i in range(n):
            j = cur[i]
            if done_at[j] is not None:
                p[i][j] += t - start[i]
                start[i] = t
                order = orders[i]
                k = cursor[i] + 1
                while done_at[order[k]] is not None:
                    k += 1
                cursor[i] = k
                cur[i] = order[k]
    return p, done_at, events


def probabilistic_serial(prefs, trace=False):
    """Simultaneous eating at unit speed, simulated event to event.

    Returns ``(AssignmentMatrix, ExhaustionTimes)``; all arithmetic is exact.
    """
    prefs = check_preferences(prefs)
    p, times, events = _ps(prefs, trace=trace)
    return AssignmentMatrix(tuple(map(tuple, p))), ExhaustionTimes(tuple(times), tuple(events))


def _ps_deviation_leaves(orders, agent):
    """Every distinct outcome agent ``agent`` can reach by reordering her list.

    Her strategy only matters through the sequence of items she actually
    eats: an item already exhausted when she moves on is skipped wherever it
    sits. So the full space of n! orders collapses to a branching over the
    non-exhausted items each time her current item runs out. Yields
    ``(strategy, row)`` where ``strategy`` is the lexicographically smallest
    full order producing that branch.
    """
    n = len(orders)
    others = [i for i in range(n) if i != agent]

    def min_strategy(branches):
        used = set()
        out = []
        for exhausted, c in branches:
            for x in sorted(exhausted - used):
                if x >= c:
                    break
                out.append(x)
                used.add(x)
            out.append(c)
            used.add(c)
        out.extend(j for j in range(n) if j not in used)
        return tuple(out)

    def run(state, branches):
        t, remaining, done, cur, cursor, start, row = state
        mine = cur[agent]
        while True:
            counts = {}
            for i in range(n):
                j = cur[i]
                counts[j] = counts.get(j, 0) + 1
            dt = min(remaining[j] / c for j, c in counts.items())
            t += dt
            for j, c in counts.items():
                remaining[j] -= dt * c
                if not remaining[j]:
                    done[j] = True
            if t == 1:
                row[mine] += t - start
                yield min_strategy(branches), tuple(row)
                return
            for i in others:
                if done[cur[i]]:
                    order = orders[i]
                    k = cursor[i] + 1
                    while done[order[k]]:
                        k += 1
                    cursor[i] = k
                    cur[i] = order[k]
            if done[mine]:
                row[mine] += t - start
                exhausted = frozenset(j for j in range(n) if done[j])
                for c in range(n):
                    if done[c]:
                        continue
                    cur2 = list(cur)
                    cur2[agent] = c
                    child = (t, list(remaining), list(done), cur2, list(cursor), t, list(row))
                    yield from run(child, branches + ((exhausted, c),))
                return

    for c in range(n):
        cur = [o[0] for o in orders]
        cur[agent] = c
        state = (ZERO, [ONE] * n, [False] * n, cur, [0] * n, ZERO, [ZERO] * n)
        yield from run(state, ((frozenset(), c),))


# --- Random Priority --------------------------------------------------------


def serial_dictatorship(prefs, order=None):
    """Agents pick in ``order`` (default 0..n-1), each taking her top available item."""
    n = len(prefs)
    if order is None:
        order = range(n)
    taken = [False] * n
    mu = [None] * n
    for a in order:
        for j in prefs[a]:
            if not taken[j]:
                taken[j] = True
                mu[a] = j
                break
    return tuple(mu)


def _first_available(order, mask):
    for j in order:
        if mask >> j & 1:
            return j
    raise AssertionError("no available item")


def _rp_counts(prefs):
    """Number of priority orders (out of n!) in which agent a receives item j.

    Dynamic program over (agents already served, items still available);
    equals the sum over all n! serial dictatorships.
    """
    n = len(prefs)
    fact = [math.factorial(k) for k in range(n + 1)]
    counts = [[0] * n for _ in range(n)]
    level = {(0, (1 << n) - 1): 1}
    for k in range(n):
        w = fact[n - k - 1]
        nxt = {}
        for (agents, items), c in level.items():
            for a in range(n):
                if agents >> a & 1:
                    continue
                top = _first_available(prefs[a], items)
                counts[a][top] += c * w
                key = (agents | 1 << a, items & ~(1 << top))
                nxt[key] = nxt.get(key, 0) + c
        level = nxt
    return counts


def _rp_sampled(prefs, seed, trials, batch=10_000):
    n = len(prefs)
    counts = np.zeros((n, n), dtype=np.int64)
    children = np.random.SeedSequence(seed).spawn(-(-trials // batch))
    left = trials
    for child in children:
        size = min(batch, left)
        left -= size
        rng = np.random.default_rng(child)
        orders = rng.permuted(np.tile(np.arange(n), (size, 1)), axis=1)
        for order in orders.tolist():
            mu = serial_dictatorship(prefs, order)
            for a, j in enumerate(mu):
                counts[a, j] += 1
    return counts


def random_priority(prefs, mode="exact", *, seed=None, trials=None, max_exact_n=DEFAULT_MAX_EXACT_N):
    """Serial dictatorship under a uniformly random priority order.

    ``mode="exact"`` averages over all n! orders (n <= ``max_exact_n``);
    ``mode="sample"`` averages ``trials`` orders drawn from ``seed``.
    """
    prefs = check_preferences(prefs)
    n = len(prefs)
    if mode == "exact":
        if n > max_exact_n:
            raise CapacityError(
                f"exact Random Priority is capped at n={max_exact_n} (got n={n}); "
                "use mode='sample' or raise max_exact_n"
            )
        total = math.factorial(n)
        counts = _rp_counts(prefs)
        return AssignmentMatrix(tuple(tuple(Fraction(c, total) for c in row) for row in counts))
    if mode == "sample":
        if seed is None:
            raise ValueError("sample mode needs an explicit seed")
        if trials is None or trials < 1:
            raise ValueError("sample mode needs trials >= 1")
        counts = _rp_sampled(prefs, seed, trials)
        p = tuple(tuple(Fraction(int(c), trials) for c in row) for row in counts)
        return AssignmentMatrix(p, ("sampled", seed, trials))
    raise ValueError(f"unknown mode {mode!r}")


@lru_cache(maxsize=4)
def _all_orders(n):
    """All strict orders of n items in lexicographic order, with their rank matrix."""
    perms = np.array(list(permutations(range(n))), dtype=np.int8).reshape(-1, n)
    ranks = np.empty_like(perms)
    rows = np.arange(len(perms))[:, None]
    ranks[rows, perms] = np.arange(n, dtype=np.int8)
    return perms, ranks


def _rp_turn_distribution(prefs, agent):
    """Counts (out of n!) of the available item set at ``agent``'s turn."""
    n = len(prefs)
    others = [a for a in range(n) if a != agent]
    fact = [math.factorial(k) for k in range(n + 1)]
    dist = {}
    level = {(0, (1 << n) - 1): 1}
    for k in range(n):
        w = fact[n - 1 - k]
        nxt = {}
        for (served, items), c in level.items():
            dist[items] = dist.get(items, 0) + c * w
            if k == n - 1:
                continue
            for a in others:
                if served >> a & 1:
                    continue
                top = _first_available(prefs[a], items)
                key = (served | 1 << a, items & ~(1 << top))
                nxt[key] = nxt.get(key, 0) + c
        level = nxt
    return dist


def _common_denominator(values):
    den = 1
    for v in values:
        den = math.lcm(den, Fraction(v).denominator)
    return den


# --- Random dictatorial ------------------------------------------------------


def _dictator_matching(prefs, d):
    n = len(prefs)
    order = prefs[d]
    mu = [None] * n
    mu[d] = order[0]
    rest = iter(order[1:])
    for a in range(n):
        if a != d:
            mu[a] = next(rest)
    return tuple(mu)


def random_dictatorial(prefs):
    """A uniformly random dictator takes her top item; the other agents, by
    ascending index, take the remaining items in the dictator's order."""
    prefs = check_preferences(prefs)
    n = len(prefs)
    p = [[ZERO] * n for _ in range(n)]
    w = Fraction(1, n)
    for d in range(n):
        for a, j in enumerate(_dictator_matching(prefs, d)):
            p[a][j] += w
    return AssignmentMatrix(tuple(map(tuple, p)))


# --- naive welfare maximizer --------------------------------------------------


def naive_max_welfare(reports):
    """Matching maximizing the reported welfare; lexicographically smallest
    assignment vector among the maximizers."""
    reports = check_valuations(reports)
    mu, _ = max_weight_matching(reports.values)
    return mu


# --- estimator wrappers ---------------------------------------------------------


class Mechanism(TransformerMixin, BaseEstimator):
    """Base class: ``fit`` validates the input shape, ``transform`` allocates.

    Subclasses implement :meth:`allocate` on already validated input and may
    override :meth:`best_deviation` with an exhaustive search that is faster
    than enumerating all n! orders one by one.
    """

    ordinal = True
    randomized = True
    anonymous = False
    name = "mechanism"

    def _validate(self, X):
        if self.ordinal:
            return check_preferences(X)
        return check_valuations(X).values

    def fit(self, X, y=None):
        X = self._validate(X)
        self.n_agents_ = len(X)
        return self

    def transform(self, X):
        return self.allocate(self._validate(X))

    def allocate(self, X) -> AssignmentMatrix:
        raise NotImplementedError

    def predict(self, X):
        """The matching chosen by a deterministic mechanism."""
        if self.randomized:
            raise TypeError(f"{self.name} is randomized; use transform() for probabilities")
        p = self.transform(X)
        return tuple(row.index(ONE) for row in p)

    def best_deviation(self, profile, agent, values):
        """``(strategy, utility)`` over all strict orders, or None if no fast path."""
        return None


class ProbabilisticSerial(Mechanism):
    name = "ps"
    anonymous = True

    def allocate(self, X):
        p, _, _ = _ps(X)
        return AssignmentMatrix(tuple(map(tuple, p)))

    def exhaustion_times(self, X):
        _, times, _ = _ps(self._validate(X))
        return ExhaustionTimes(tuple(times))

    def best_deviation(self, profile, agent, values):
        best = None
        for strategy, row in _ps_deviation_leaves(profile, agent):
            u = sum((p * v for p, v in zip(row, values) if p), ZERO)
            if best is None or u > best[1] or (u == best[1] and strategy < best[0]):
                best = (strategy, u)
        return best


class RandomPriority(Mechanism):
    name = "rp"
    anonymous = True

    def __init__(self, mode="exact", seed=None, trials=None, max_exact_n=DEFAULT_MAX_EXACT_N):
        self.mode = mode
        self.seed = seed
        self.trials = trials
        self.max_exact_n = max_exact_n

    def allocate(self, X):
        return random_priority(
            X, self.mode, seed=self.seed, trials=self.trials, max_exact_n=self.max_exact_n
        )

    def best_deviation(self, profile, agent, values):
        if self.mode != "exact":
            return None
        n = len(profile)
        if n > self.max_exact_n:
            raise CapacityError(f"exact Random Priority is capped at n={self.max_exact_n}")
        dist = _rp_turn_distribution(profile, agent)
        den = _common_denominator(values)
        scaled = [int(v * den) for v in values]
        total = math.factorial(n)
        perms, ranks = _all_orders(n)
        big = total * max(map(abs, scaled), default=0) >= 2**62
        acc = np.zeros(len(perms), dtype=object if big else np.int64)
        vals = np.array(scaled, dtype=object if big else np.int64)
        for items, c in dist.items():
            mask = np.array([items >> j & 1 for j in range(n)], dtype=bool)
            top = np.where(mask, ranks, n).argmin(axis=1)
            acc += c * vals[top]
        k = int(np.argmax(acc))
        return tuple(int(j) for j in perms[k]), Fraction(int(acc[k]), total * den)


class SerialDictatorship(Mechanism):
    name = "sd"
    randomized = False

    def __init__(self, priority=None):
        self.priority = priority

    def allocate(self, X):
        order = self.priority
        if order is not None:
            order = check_order(order, len(X))
        return AssignmentMatrix.from_matching(serial_dictatorship(X, order))


class RandomDictatorial(Mechanism):
    name = "rd"

    def allocate(self, X):
        return random_dictatorial(X)

    def best_deviation(self, profile, agent, values):
        # Her own report matters only through its top item, and only when
        # she is the dictator; the order starting with c and then ascending is
        # the smallest strategy with top c.
        n = len(profile)
        best = max(range(n), key=lambda c: (values[c], -c))
        strategy = (best,) + tuple(j for j in range(n) if j != best)
        trial = list(profile)
        trial[agent] = strategy
        row = random_dictatorial(trial)[agent]
        return strategy, sum((p * v for p, v in zip(row, values)), ZERO)


class NaiveMaxWelfare(Mechanism):
    name = "naive"
    ordinal = False
    randomized = False

    def allocate(self, X):
        mu, _ = max_weight_matching(X)
        return AssignmentMatrix.from_matching(mu)


MECHANISMS = {
    "ps": ProbabilisticSerial,
    "rp": RandomPriority,
    "sd": SerialDictatorship,
    "rd": RandomDictatorial,
    "naive": NaiveMaxWelfare,
}


def get_mechanism(name, **params) -> Mechanism:
    try:
        cls = MECHANISMS[name]
    except KeyError:
        raise ValueError(f"unknown mechanism {name!r}; choose from {sorted(MECHANISMS)}") from None
    return cls(**params)
