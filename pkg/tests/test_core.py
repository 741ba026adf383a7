from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from matchpoa.core import (
    AssignmentMatrix,
    ParseError,
    ShapeError,
    ValuationProfile,
    check_preferences,
    dump_instance,
    dump_strategies,
    induced_order,
    parse_instance,
    parse_strategies,
    to_rational,
    validate_profile,
)

rationals = st.fractions(min_value=0, max_value=1, max_denominator=50)


def square(draw_n=4):
    return st.integers(1, draw_n).flatmap(
        lambda n: st.lists(st.lists(rationals, min_size=n, max_size=n), min_size=n, max_size=n)
    )


def test_parse_fraction_strings():
    text = '{"n": 2, "normalization": "unit-sum", "valuations": [["1/2", "1/2"], ["3/4", "1/4"]]}'
    prof = parse_instance(text)
    assert prof.values == ((F(1, 2), F(1, 2)), (F(3, 4), F(1, 4)))
    assert prof.normalization == "unit-sum"


def test_parse_decimal_is_exact():
    prof = parse_instance('{"n": 2, "valuations": [["0.6", 0.4], [1, 0]]}')
    assert prof[0] == (F(3, 5), F(2, 5))
    assert prof[1] == (F(1), F(0))


def test_parse_non_square_is_shape_error():
    with pytest.raises(ShapeError):
        parse_instance('{"n": 2, "valuations": [["1", "0", "0"], ["0", "1", "0"]]}')


def test_parse_errors_carry_location():
    with pytest.raises(ParseError) as err:
        parse_instance('{"n": 2,\n "valuations": [["1/2", "x"], ["1", "0"]]}')
    assert err.value.field == "valuations[0][1]"
    with pytest.raises(ParseError) as err:
        parse_instance('{"n": 2,\n "valuations": [["1/2" "1/2"]]}')
    assert err.value.line == 2
    with pytest.raises(ParseError):
        parse_instance('{"valuations": []}')


def test_to_rational_refuses_floats():
    with pytest.raises(ParseError):
        to_rational(0.5)
    assert to_rational("  7/14 ") == F(1, 2)


def test_validate_unit_sum():
    assert validate_profile(ValuationProfile(((F(1, 2), F(1, 2)), (F(1, 4), F(3, 4)))))
    bad = validate_profile(ValuationProfile(((F(1, 2), F(1, 4)), (F(1, 2), F(1, 2)))))
    assert not bad
    assert (bad.agent, bad.reason, bad.value) == (0, "row sum", F(3, 4))


def test_validate_unit_range():
    row = (F(1), F(1, 2), F(0))
    assert validate_profile(ValuationProfile((row,) * 3, "unit-range"))
    bad = validate_profile(ValuationProfile(((F(1, 2), F(0)), (F(1), F(0))), "unit-range"))
    assert (bad.agent, bad.reason, bad.value) == (0, "row max", F(1, 2))


def test_induced_order_examples():
    assert induced_order((F(1, 4), F(1, 2), F(1, 4))) == (1, 0, 2)
    assert induced_order((F(3), F(2), F(1))) == (0, 1, 2)
    assert induced_order((F(1, 5),) * 5) == (0, 1, 2, 3, 4)


@given(square())
def test_instance_round_trip(rows):
    prof = ValuationProfile(tuple(map(tuple, rows)), "unchecked")
    assert parse_instance(dump_instance(prof)) == prof


@given(st.lists(rationals, min_size=2, max_size=6), st.data())
def test_induced_order_sorted_and_stable(values, data):
    order = induced_order(values)
    assert sorted(order) == list(range(len(values)))
    for a, b in zip(order, order[1:]):
        assert values[a] > values[b] or (values[a] == values[b] and a < b)
    # swapping two equal-valued entries leaves the order unchanged
    i = data.draw(st.integers(0, len(values) - 1))
    j = data.draw(st.integers(0, len(values) - 1))
    if values[i] == values[j]:
        swapped = list(values)
        swapped[i], swapped[j] = swapped[j], swapped[i]
        assert induced_order(swapped) == order


@given(square())
def test_validate_matches_definition(rows):
    prof = ValuationProfile(tuple(map(tuple, rows)), "unit-sum")
    expected = all(sum(r) == 1 and min(r) >= 0 for r in rows)
    assert bool(validate_profile(prof)) == expected
    prof = ValuationProfile(tuple(map(tuple, rows)), "unit-range")
    assert bool(validate_profile(prof)) == all(max(r) == 1 and min(r) == 0 for r in rows)


def test_strategy_round_trip():
    prefs = ((2, 0, 1), (0, 1, 2), (1, 2, 0))
    text = dump_strategies(prefs)
    assert '"orders": [[3, 1, 2]' in text
    assert parse_strategies(text) == prefs
    with pytest.raises(ParseError):
        parse_strategies('{"orders": [[1, 1], [1, 2]]}')


def test_check_preferences_rejects_bad_orders():
    with pytest.raises(ValueError):
        check_preferences([(0, 1), (0, 0)])
    with pytest.raises(ValueError):
        check_preferences([])


def test_assignment_matrix_helpers():
    p = AssignmentMatrix.from_matching((1, 0))
    assert p.is_exact and p.is_bistochastic()
    assert p.column(0) == (0, 1)
    assert p.to_numpy().tolist() == [[0.0, 1.0], [1.0, 0.0]]
    with pytest.raises(ShapeError):
        ValuationProfile(((1, 0), (1,)))
