import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from preduce.expr import (
    Chart, ChartMismatchError, EvaluationError, ParseError, compile_vector, differentiate, evaluate,
    gradient, is_zero, simplify, substitute, to_polynomial,
)

CHART = Chart(["x", "y", "z"])


def test_parse_and_evaluate():
    e = CHART.parse("x^2*y + sin(z) - 3/y")
    val = evaluate(e, [2.0, 3.0, 0.5])
    assert val == pytest.approx(12.0 + math.sin(0.5) - 1.0, abs=1e-15)


def test_parse_error_reports_position():
    with pytest.raises(ParseError) as info:
        CHART.parse("x + * y")
    assert info.value.position == 4


def test_unknown_name_is_parse_error():
    with pytest.raises(ParseError):
        CHART.parse("x + w")


def test_non_constant_exponent_rejected():
    with pytest.raises(ParseError):
        CHART.parse("x^y")


def test_domain_error_names_node():
    e = CHART.parse("x + ln(y)")
    with pytest.raises(EvaluationError) as info:
        evaluate(e, [1.0, -1.0, 0.0])
    assert "ln" in str(info.value)
    with pytest.raises(EvaluationError):
        evaluate(CHART.parse("1/(x - 1)"), [1.0, 0.0, 0.0])


def test_chart_mismatch():
    other = Chart(["a", "b"])
    with pytest.raises(ChartMismatchError):
        CHART.check(other.parse("a + b"))
    with pytest.raises(ChartMismatchError):
        CHART.point([1.0, 2.0])


def test_simplify_basic_identities():
    assert str(simplify(CHART.parse("0*sin(x) + y"))) == "y"
    assert simplify(CHART.parse("x - x")).is_const(0.0)
    assert is_zero(CHART.parse("(x + y)^2 - x^2 - 2*x*y - y^2"))
    assert not is_zero(CHART.parse("x*y - y*x + z"))


def test_derivative_rules():
    e = CHART.parse("x^3*y + exp(z)*x")
    assert is_zero(differentiate(e, 0) - CHART.parse("3*x^2*y + exp(z)"))
    assert is_zero(differentiate(e, 2) - CHART.parse("exp(z)*x"))
    assert [str(g) for g in gradient(CHART.parse("x*y"), CHART)] == ["y", "x", "0"]


def test_substitute_and_polynomial_form():
    e = substitute(CHART.parse("x*y"), {0: CHART.parse("y + z")})
    assert to_polynomial(simplify(e)) == {((1, 2),): 1.0, ((1, 1), (2, 1)): 1.0}
    assert to_polynomial(CHART.parse("sin(x)")) is None


def test_compiled_vector_matches_walk():
    exprs = [CHART.parse(s) for s in ("x*y", "sqrt(x^2 + 1)", "cos(y)*z")]
    fn = compile_vector(exprs, 3)
    z = [0.3, -1.2, 2.0]
    assert fn(z) == pytest.approx([evaluate(e, z) for e in exprs], abs=0)


# -- property tests

_leaf = st.one_of(
    st.sampled_from(["x", "y", "z"]),
    st.integers(min_value=-5, max_value=5).map(str),
    st.sampled_from(["0.5", "1.25", "3"]),
)


def _combine(children):
    binop = st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(
        lambda t: f"({t[0]} {t[1]} {t[2]})")
    unary = st.tuples(st.sampled_from(["sin", "cos", "exp", "-"]), children).map(
        lambda t: f"-({t[1]})" if t[0] == "-" else f"{t[0]}({t[1]})")
    power = st.tuples(children, st.integers(min_value=0, max_value=3)).map(lambda t: f"({t[0]})^{t[1]}")
    return st.one_of(binop, unary, power)


def _value(e, z):
    try:
        v = evaluate(e, z)
    except EvaluationError:
        assume(False)
    assume(abs(v) < 1e8)
    return v


expressions = st.recursive(_leaf, _combine, max_leaves=8)
points = st.lists(st.floats(min_value=-1.5, max_value=1.5), min_size=3, max_size=3)


@settings(max_examples=150, deadline=None)
@given(expressions)
def test_print_parse_round_trip(text):
    e = CHART.parse(text)
    assert CHART.parse(str(e)) == e


@settings(max_examples=150, deadline=None)
@given(expressions, points)
def test_simplify_preserves_values(text, z):
    e = CHART.parse(text)
    a, b = _value(e, z), evaluate(simplify(e), z)
    assert b == pytest.approx(a, rel=1e-9, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(expressions, points, st.integers(min_value=0, max_value=2))
def test_derivative_matches_finite_difference(text, z, i):
    e = CHART.parse(text)
    h = 1e-5
    zp, zm = list(z), list(z)
    zp[i] += h
    zm[i] -= h
    _value(e, z)
    fd = (_value(e, zp) - _value(e, zm)) / (2 * h)
    exact = _value(differentiate(e, i), z)
    assert exact == pytest.approx(fd, rel=1e-5, abs=1e-5)


@settings(max_examples=80, deadline=None)
@given(expressions, expressions, points)
def test_leibniz_rule_for_derivatives(a, b, z):
    f, g = CHART.parse(a), CHART.parse(b)
    _value(f * g, z)
    lhs = _value(differentiate(f * g, 1), z)
    rhs = evaluate(differentiate(f, 1) * g + f * differentiate(g, 1), z)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)
