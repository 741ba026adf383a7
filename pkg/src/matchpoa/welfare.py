"""Social welfare, exact maximum-weight matching and anarchy ratios."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .core import ZERO, ShapeError


class UndefinedRatioError(ValueError):
    pass


@dataclass(frozen=True)
class WelfareReport:
    sw: Fraction
    opt: Fraction
    ratio: Fraction = None


def _hungarian_max(weights):
    """Maximum-weight perfect assignment on an integer matrix.

    Shortest augmenting paths with potentials (Kuhn-Munkres, O(n^3)); all
    arithmetic on Python ints. Returns ``assign`` with ``assign[row] = col``.
    """
    n = len(weights)
    INF = float("inf")
    u = [0] * (n + 1)
    v = [0] * (n + 1)
    way = [0] * (n + 1)
    match = [0] * (n + 1)  # match[col] = row, 1-based
    for row in range(1, n + 1):
        match[0] = row
        col0 = 0
        minv = [INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[col0] = True
            r = match[col0]
            delta = INF
            col1 = 0
            w = weights[r - 1]
            for col in range(1, n + 1):
                if used[col]:
                    continue
                cur = -w[col - 1] - u[r] - v[col]
                if cur < minv[col]:
                    minv[col] = cur
                    way[col] = col0
                if minv[col] < delta:
                    delta = minv[col]
                    col1 = col
            for col in range(n + 1):
                if used[col]:
                    u[match[col]] += delta
                    v[col] -= delta
                else:
                    minv[col] -= delta
            col0 = col1
            if match[col0] == 0:
                break
        while col0:
            col1 = way[col0]
            match[col0] = match[col1]
            col0 = col1
    assign = [0] * n
    for col in range(1, n + 1):
        assign[match[col] - 1] = col - 1
    return assign


def max_weight_matching(weights):
    """Exact maximum-weight perfect matching of a square rational matrix.

    Among all maximizers the lexicographically smallest assignment vector is
    returned. Ties are resolved inside a single assignment solve: weights are
    scaled to integers and a base-n tie-break term, which orders matchings
    lexicographically, is added below the least significant unit of weight.

    Returns ``(matching, total_weight)``.
    """
    n = len(weights)
    if any(len(row) != n for row in weights):
        raise ShapeError("weight matrix must be square")
    if n == 0:
        return (), ZERO
    den = 1
    for row in weights:
        for x in row:
            den = math.lcm(den, Fraction(x).denominator)
    scale = n**n
    place = [n ** (n - 1 - i) for i in range(n)]
    perturbed = [
        [int(Fraction(x) * den) * scale + (n - 1 - j) * place[i] for j, x in enumerate(row)]
        for i, row in enumerate(weights)
    ]
    mu = tuple(_hungarian_max(perturbed))
    total = sum((Fraction(weights[i][mu[i]]) for i in range(n)), ZERO)
    return mu, total


def social_welfare(truth, p) -> Fraction:
    """Expected welfare sum_i sum_j p_ij * u_ij under the true values."""
    values = getattr(truth, "values", truth)
    if len(values) != len(p) or any(len(a) != len(b) for a, b in zip(values, p)):
        raise ShapeError("valuation profile and assignment matrix dimensions differ")
    return sum((q * u for row_u, row_p in zip(values, p) for u, q in zip(row_u, row_p) if q), ZERO)


def optimal_matching(truth):
    """``(matching, welfare)`` of the welfare-maximizing matching."""
    return max_weight_matching(getattr(truth, "values", truth))


def anarchy_ratios(opt, equilibrium_welfares):
    """``(poa, pos)``: optimum over the worst and over the best equilibrium welfare."""
    welfares = [Fraction(w) for w in equilibrium_welfares]
    if not welfares:
        raise ValueError("need at least one equilibrium welfare")
    if min(welfares) <= 0:
        raise UndefinedRatioError("anarchy ratio undefined for non-positive welfare")
    opt = Fraction(opt)
    return opt / min(welfares), opt / max(welfares)


def welfare_report(truth, p) -> WelfareReport:
    sw = social_welfare(truth, p)
    _, opt = optimal_matching(truth)
    return WelfareReport(sw, opt, opt / sw if sw > 0 else None)
