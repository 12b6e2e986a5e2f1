import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypdich.errors import DomainError, ExprSyntaxError, MissingVariableError
from hypdich.expr import (
    Binary,
    Call,
    Const,
    Unary,
    Var,
    evaluate,
    free_vars,
    parse,
    to_source,
)


def test_parse_literal():
    assert parse("1") == Const(1.0)


def test_parse_grammar_shape():
    ast = parse("sin(t) + x*u1")
    assert ast == Binary("+", Call("sin", Var("t")), Binary("*", Var("x"), Var("u1")))


def test_pow_right_associative():
    # hand evaluation of the declared grammar: 2^(3^2) = 512
    assert evaluate(parse("2^3^2"), {}) == 512.0


def test_eval_product():
    assert evaluate(parse("x*t"), {"x": 0.5, "t": 2.0}) == 1.0


def test_eval_exp_identity():
    assert evaluate(parse("exp(0)"), {}) == 1.0


def test_eval_sin_stdlib_oracle():
    assert evaluate(parse("sin(t)"), {"t": math.pi / 2}) == pytest.approx(1.0, abs=1e-15)


def test_free_vars():
    assert free_vars(parse("1+2")) == frozenset()
    assert free_vars(parse("x*u2")) == frozenset({"x", "u2"})
    assert free_vars(parse("sin(t)+sin(t)")) == frozenset({"t"})


def test_missing_binding():
    with pytest.raises(MissingVariableError):
        evaluate(parse("x+1"), {})


def test_domain_errors():
    with pytest.raises(DomainError):
        evaluate(parse("sqrt(0-1)"), {})
    with pytest.raises(DomainError):
        evaluate(parse("1/x"), {"x": 0.0})
    with pytest.raises(DomainError):
        evaluate(parse("(0-2)^0.5"), {})
    with pytest.raises(DomainError):
        evaluate(parse("exp(x)"), {"x": 1e6})


def test_syntax_error_offsets():
    with pytest.raises(ExprSyntaxError) as err:
        parse("1 + @")
    assert err.value.offset == 4
    with pytest.raises(ExprSyntaxError) as err:
        parse("foo(x)")
    assert err.value.offset == 0
    with pytest.raises(ExprSyntaxError):
        parse("(1+2")
    with pytest.raises(ExprSyntaxError):
        parse("")


def test_variable_whitelist():
    parse("x*u2", allowed_vars={"x", "t", "u1", "u2"})
    with pytest.raises(ExprSyntaxError):
        parse("x*u3", allowed_vars={"x", "t", "u1", "u2"})


def test_unary_minus_precedence():
    # ^ binds tighter than unary minus, unary minus tighter than *
    assert evaluate(parse("-2^2"), {}) == -4.0
    assert parse("-x*t") == Binary("*", Unary("neg", Var("x")), Var("t"))


def test_array_evaluation():
    x = np.linspace(0.0, 1.0, 7)
    out = evaluate(parse("sin(x)*2 + t"), {"x": x, "t": 1.0})
    np.testing.assert_allclose(out, 2 * np.sin(x) + 1.0)


def test_array_domain_error():
    x = np.array([1.0, -1.0])
    with pytest.raises(DomainError):
        evaluate(parse("sqrt(x)"), {"x": x})


# -- property tests ---------------------------------------------------------

_VARS = ("x", "t", "u1", "u2")


def _asts(depth):
    consts = st.floats(
        min_value=0.0, max_value=100.0, allow_nan=False, allow_infinity=False
    ).map(Const)
    names = st.sampled_from(_VARS).map(Var)
    leaf = consts | names
    if depth == 0:
        return leaf
    sub = _asts(depth - 1)
    return (
        leaf
        | st.builds(Unary, st.just("neg"), sub)
        | st.builds(Binary, st.sampled_from("+-*/^"), sub, sub)
        | st.builds(Call, st.sampled_from(["sin", "cos", "exp", "sqrt", "tanh", "abs"]), sub)
    )


@settings(max_examples=300, deadline=None)
@given(_asts(6))
def test_print_parse_round_trip(ast):
    assert parse(to_source(ast)) == ast


@settings(max_examples=200, deadline=None)
@given(
    st.floats(min_value=-10, max_value=10),
    st.floats(min_value=-10, max_value=10),
    st.floats(min_value=-10, max_value=10),
)
def test_precedence_mul_over_add(a, b, c):
    env = {"x": a, "t": b, "u1": c}
    assert evaluate(parse("x+t*u1"), env) == evaluate(parse("x+(t*u1)"), env)


def test_eval_is_pure():
    ast = parse("x^2 + sin(t)")
    env = {"x": 1.5, "t": 0.3}
    assert evaluate(ast, env) == evaluate(ast, env)
