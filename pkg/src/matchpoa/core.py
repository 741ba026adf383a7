"""Exact-rational profile types, instance I/O and input validation.

Agents and items are 0-based everywhere in the Python API. The on-disk
instance and strategy formats are 1-based, and conversion happens only in
the parse/dump functions here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

Rational = Fraction

Order = tuple  # tuple[int, ...], most-preferred item first
Profile = tuple  # tuple[Order, ...], one order per agent
Matching = tuple  # tuple[int, ...], Matching[i] is the item of agent i

NORMALIZATIONS = ("unit-sum", "unit-range", "unchecked")

ZERO = Fraction(0)
ONE = Fraction(1)


class ParseError(ValueError):
    """Malformed instance or strategy text."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ShapeError(ValueError):
    pass


class CapacityError(RuntimeError):
    """A computation would exceed its configured budget."""


def to_rational(value, field=None) -> Fraction:
    """Convert an int, Fraction or "p/q" / finite decimal string exactly.

    Floats are refused: a float has already lost the exact decimal value.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ParseError(f"expected a rational, got {value!r}", field=field)
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise ParseError(f"not a rational: {value!r}", field=field) from None
    raise ParseError(f"expected a rational, got {type(value).__name__}", field=field)


@dataclass(frozen=True)
class ValuationProfile:
    """n x n matrix of exact values; row i is agent i's valuation vector."""

    values: tuple
    normalization: str = "unit-sum"

    def __post_init__(self):
        rows = tuple(tuple(to_rational(v) for v in row) for row in self.values)
        n = len(rows)
        for row in rows:
            if len(row) != n:
                raise ShapeError(f"valuation matrix is not square: {n} rows, a row of length {len(row)}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        object.__setattr__(self, "values", rows)

    @property
    def n(self) -> int:
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    def induced_profile(self) -> Profile:
        return tuple(induced_order(row) for row in self.values)

    def replace_rows(self, rows: dict) -> "ValuationProfile":
        values = [rows.get(i, row) for i, row in enumerate(self.values)]
        return ValuationProfile(tuple(values), self.normalization)


@dataclass(frozen=True)
class AssignmentMatrix:
    """p[i][j] = probability that agent i receives item j.

    ``provenance`` is ``"exact"`` or ``("sampled", seed, trials)``.
    """

    p: tuple
    provenance: object = "exact"

    @property
    def n(self) -> int:
        return len(self.p)

    def __getitem__(self, i):
        return self.p[i]

    def __iter__(self):
        return iter(self.p)

    def __len__(self):
        return len(self.p)

    @property
    def is_exact(self) -> bool:
        return self.provenance == "exact"

    def column(self, j):
        return tuple(row[j] for row in self.p)

    def is_bistochastic(self) -> bool:
        n = self.n
        if any(v < 0 or v > 1 for row in self.p for v in row):
            return False
        return all(sum(row) == 1 for row in self.p) and all(
            sum(self.p[i][j] for i in range(n)) == 1 for j in range(n)
        )

    def to_numpy(self):
        import numpy as np

        return np.array([[float(v) for v in row] for row in self.p])

    @classmethod
    def from_matching(cls, matching: Sequence[int]) -> "AssignmentMatrix":
        n = len(matching)
        return cls(tuple(tuple(ONE if matching[i] == j else ZERO for j in range(n)) for i in range(n)))


@dataclass(frozen=True)
class ValidationResult:
    valid: bool
    normalization: str
    agent: int = None
    reason: str = ""
    value: Fraction = None
    problems: tuple = field(default=())

    def __bool__(self):
        return self.valid


def validate_profile(profile: ValuationProfile) -> ValidationResult:
    """Check the declared normalization exactly.

    On failure the first offending agent row is reported together with the
    violated quantity (row sum, max or min); every offence is listed in
    ``problems``.
    """
    problems = []
    if profile.normalization == "unit-sum":
        for i, row in enumerate(profile.values):
            if any(v < 0 for v in row):
                problems.append((i, "negative entry", min(row)))
            s = sum(row, ZERO)
            if s != 1:
                problems.append((i, "row sum", s))
    elif profile.normalization == "unit-range":
        for i, row in enumerate(profile.values):
            if max(row) != 1:
                problems.append((i, "row max", max(row)))
            if min(row) != 0:
                problems.append((i, "row min", min(row)))
    if not problems:
        return ValidationResult(True, profile.normalization)
    agent, reason, value = problems[0]
    return ValidationResult(False, profile.normalization, agent, reason, value, tuple(problems))


def induced_order(values: Sequence) -> Order:
    """Items by value descending, ties broken by the smaller item index."""
    return tuple(sorted(range(len(values)), key=lambda j: (-values[j], j)))


def check_order(order, n: int = None) -> Order:
    order = tuple(int(j) for j in order)
    if n is None:
        n = len(order)
    if len(order) != n or sorted(order) != list(range(n)):
        raise ValueError(f"not a strict order over {n} items: {order}")
    return order


def check_preferences(prefs) -> Profile:
    """Validate a preference profile and return it as a tuple of tuples."""
    prefs = tuple(prefs)
    n = len(prefs)
    if n == 0:
        raise ValueError("empty preference profile")
    return tuple(check_order(order, n) for order in prefs)


def check_valuations(values, normalization="unchecked") -> ValuationProfile:
    if isinstance(values, ValuationProfile):
        return values
    return ValuationProfile(tuple(tuple(row) for row in values), normalization)


# --- instance and strategy files -------------------------------------------


def _locate(text: str, needle: str):
    for lineno, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return lineno
    return None


def parse_instance(text: str) -> ValuationProfile:
    """Parse the JSON instance format.

    ``{"n": 2, "normalization": "unit-sum", "valuations": [["1/2", "1/2"], ...]}``

    Entries are "p/q" strings, finite decimal strings or JSON numbers; JSON
    numbers are read from their literal text so "0.6" becomes exactly 3/5.
    The normalization is recorded but not validated here.
    """
    try:
        data = json.loads(text, parse_float=Fraction, parse_int=Fraction)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    if not isinstance(data, dict):
        raise ParseError("instance must be a JSON object", line=1)
    for key in ("n", "valuations"):
        if key not in data:
            raise ParseError(f"missing field {key!r}", field=key)
    n = data["n"]
    if not isinstance(n, Fraction) or n.denominator != 1 or n < 1:
        raise ParseError(f"n must be a positive integer, got {n}", line=_locate(text, '"n"'), field="n")
    n = int(n)
    normalization = data.get("normalization", "unit-sum")
    if normalization not in NORMALIZATIONS:
        raise ParseError(
            f"unknown normalization {normalization!r}",
            line=_locate(text, '"normalization"'),
            field="normalization",
        )
    rows = data["valuations"]
    if not isinstance(rows, list):
        raise ParseError("valuations must be a list of rows", field="valuations")
    line = _locate(text, '"valuations"')
    if len(rows) != n:
        raise ShapeError(f"expected {n} valuation rows, found {len(rows)}")
    parsed = []
    for i, row in enumerate(rows):
        if not isinstance(row, list):
            raise ParseError("valuation row must be a list", line=line, field=f"valuations[{i}]")
        if len(row) != n:
            raise ShapeError(f"valuation row {i + 1} has {len(row)} entries, expected {n}")
        parsed.append(tuple(to_rational(v, field=f"valuations[{i}][{j}]") for j, v in enumerate(row)))
    return ValuationProfile(tuple(parsed), normalization)


def dump_instance(profile: ValuationProfile) -> str:
    rows = ",\n".join(
        "    [" + ", ".join(json.dumps(str(v)) for v in row) + "]" for row in profile.values
    )
    return (
        "{\n"
        f'  "n": {profile.n},\n'
        f'  "normalization": {json.dumps(profile.normalization)},\n'
        f'  "valuations": [\n{rows}\n  ]\n'
        "}\n"
    )


def parse_strategies(text: str) -> Profile:
    """Parse ``{"orders": [[1, 2, 3], ...]}`` (1-based) into a 0-based profile."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    if not isinstance(data, dict) or "orders" not in data:
        raise ParseError("missing field 'orders'", field="orders")
    orders = data["orders"]
    n = len(orders)
    out = []
    for i, order in enumerate(orders):
        try:
            out.append(check_order([int(j) - 1 for j in order], n))
        except (TypeError, ValueError):
            raise ParseError(f"not a permutation of 1..{n}", field=f"orders[{i}]") from None
    return tuple(out)


def dump_strategies(prefs: Iterable[Order]) -> str:
    orders = [[j + 1 for j in order] for order in prefs]
    return json.dumps({"orders": orders}) + "\n"


def format_order(order: Iterable[int]) -> str:
    """1-based, space separated: ``(0, 2, 1) -> "1 3 2"``."""
    return " ".join(str(j + 1) for j in order)


def format_profile(prefs) -> str:
    return "|".join(format_order(o) for o in prefs)
