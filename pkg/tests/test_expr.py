from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planefield.errors import (
    ConfigError,
    DomainError,
    ExprSyntaxError,
    NonIntegerExponent,
    UnknownIdentifier,
)
from planefield.expr import (
    Binary,
    Const,
    Domain,
    FieldSpec,
    Unary,
    Var,
    differentiate,
    evaluate,
    field_from_mapping,
    parse,
    to_text,
)


def test_parse_power_minus_variable():
    assert parse("x^2 - y") == Binary("sub", Binary("pow", Var("x"), Const(Fraction(2))), Var("y"))


def test_parse_rational_literal():
    node = parse("(2/3)*x^3 + 2*y^2*x")
    assert node.op == "add"
    assert node.left.left == Const(Fraction(2, 3))


def test_double_star_is_power():
    assert parse("x**3") == parse("x^3")


def test_decimal_literal_is_float():
    assert parse("0.25*x").left == Const(0.25)


@pytest.mark.parametrize(
    "text, err, offset",
    [
        ("x +", ExprSyntaxError, 3),
        ("x^0.5", NonIntegerExponent, 2),
        ("2*w", UnknownIdentifier, 2),
        ("(x", ExprSyntaxError, 2),
        ("x ) y", ExprSyntaxError, 2),
    ],
)
def test_parse_errors_report_offset(text, err, offset):
    with pytest.raises(err) as info:
        parse(text)
    assert info.value.offset == offset
    assert info.value.exit_code == 2


def test_stray_character_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse("x + é")
    assert info.value.offset == 4


def test_rational_exponent_that_is_integer_is_accepted():
    assert evaluate(parse("x^(4/2)"), (3, 0, 0)) == 9


def test_differentiate_examples():
    assert to_text(differentiate(parse("x^2 - y"), "x")) == "2*x"
    assert evaluate(differentiate(parse("x*y - y"), "y"), (5, 0, 0)) == 4
    assert differentiate(parse("x + y"), "z") == Const(Fraction(0))


def test_evaluate_examples():
    assert evaluate(parse("x^2 - y"), (1, 2, 0)) == -1
    assert evaluate(parse("x*y - y"), (0, -1, 0)) == 1


def test_evaluate_domain_errors_name_subexpression():
    with pytest.raises(DomainError) as info:
        evaluate(parse("1/x"), (0, 0, 0))
    assert info.value.details["subexpression"] == "1/x"
    with pytest.raises(DomainError) as info:
        evaluate(parse("y + sqrt(x-1)"), (0, 0, 0))
    assert "sqrt" in info.value.details["subexpression"]


def test_functions_evaluate():
    val = evaluate(parse("sin(x) + cos(y) + exp(z) + sqrt(4)"), (0.3, 0.2, 0.1))
    assert val == pytest.approx(np.sin(0.3) + np.cos(0.2) + np.exp(0.1) + 2)


def test_round_trip_of_awkward_forms():
    for text in ["-(x-y)^2", "x-(y-z)", "(2/3)*x^3-y+x*y+z", "-x^-2", "x/(y*z)", "(-1/4)*y^2", "x^(-3)", "-sin(-x)"]:
        node = parse(text)
        assert parse(to_text(node)) == node, text


# random expression trees over the grammar

_leaf = st.one_of(
    st.sampled_from([Var("x"), Var("y"), Var("z")]),
    st.fractions(min_value=-5, max_value=5, max_denominator=7).map(Const),
    st.floats(min_value=-3, max_value=3, allow_nan=False, width=32).map(lambda v: Const(float(v))),
)


def _extend(children):
    return st.one_of(
        st.tuples(st.sampled_from(["add", "sub", "mul"]), children, children).map(lambda t: Binary(*t)),
        st.tuples(children, st.integers(-3, 4)).map(lambda t: Binary("pow", t[0], Const(Fraction(t[1])))),
        st.tuples(st.sampled_from(["neg", "sin", "cos"]), children).map(lambda t: Unary(*t)),
    )


exprs = st.recursive(_leaf, _extend, max_leaves=8)
polys = st.recursive(
    _leaf,
    lambda ch: st.one_of(
        st.tuples(st.sampled_from(["add", "sub", "mul"]), ch, ch).map(lambda t: Binary(*t)),
        st.tuples(ch, st.integers(0, 3)).map(lambda t: Binary("pow", t[0], Const(Fraction(t[1])))),
    ),
    max_leaves=8,
)


def _normalize(node):
    """Parsing folds signs of constants; compare through one parse."""
    return parse(to_text(node))


@settings(max_examples=200, deadline=None)
@given(exprs)
def test_print_parse_identity(node):
    first = _normalize(node)
    assert parse(to_text(first)) == first


@settings(max_examples=150, deadline=None)
@given(polys, st.sampled_from("xyz"), st.lists(st.floats(-1.5, 1.5), min_size=3, max_size=3))
def test_derivative_matches_finite_difference(node, var, point):
    k = "xyz".index(var)
    h = 1e-4

    def at(shift):
        p = list(point)
        p[k] += shift
        return evaluate(node, p)

    fd = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h)
    exact = evaluate(differentiate(node, var), point)
    scale = max(1.0, abs(exact), max(abs(at(s)) for s in (-2 * h, 2 * h)))
    assert abs(fd - exact) <= 1e-6 * scale


@settings(max_examples=150, deadline=None)
@given(polys, polys, st.floats(-3, 3), st.sampled_from("xyz"), st.lists(st.floats(-1.5, 1.5), min_size=3, max_size=3))
def test_derivative_is_linear(e1, e2, alpha, var, point):
    combo = Binary("add", Binary("mul", Const(float(alpha)), e1), e2)
    lhs = evaluate(differentiate(combo, var), point)
    rhs = alpha * evaluate(differentiate(e1, var), point) + evaluate(differentiate(e2, var), point)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs), abs(rhs))


def test_sympy_oracle_for_third_derivatives():
    sp = pytest.importorskip("sympy")
    x, y, z = sp.symbols("x y z")
    text = "x^3*y - sin(y*z) + exp(x)/(2+z^2)"
    spec = FieldSpec(text, "x*y*z", "1")
    ref = sp.sympify(text.replace("^", "**"))
    point = (0.3, -0.7, 0.4)
    subs = dict(zip((x, y, z), point))
    for multi in [(3, 0, 0), (1, 1, 1), (0, 2, 1), (2, 0, 1), (0, 0, 3)]:
        sym = sp.diff(ref, x, multi[0], y, multi[1], z, multi[2])
        assert evaluate(spec.derivative(0, multi), point) == pytest.approx(float(sym.subs(subs)), rel=1e-12, abs=1e-12)


def test_jets_are_symmetric(generic):
    _, J, H, T = generic.jets([0.2, -0.3, 0.5], 3)
    assert np.allclose(H, np.swapaxes(H, 1, 2))
    assert np.allclose(T, np.swapaxes(T, 1, 2)) and np.allclose(T, np.swapaxes(T, 1, 3))


def test_vectorized_and_scalar_jets_agree(generic, rng):
    pts = rng.uniform(-1, 1, size=(7, 3))
    batch = generic.jets(pts, 3)
    for i, p in enumerate(pts):
        single = generic.jets(p, 3)
        for a, b in zip(batch, single):
            assert np.allclose(a[i], b, rtol=1e-14, atol=1e-14)


def test_domain_requires_extent():
    with pytest.raises(ConfigError):
        Domain((0, 0, 0), (1, 0, 1))


def test_field_mapping_pointer():
    with pytest.raises(ExprSyntaxError) as info:
        field_from_mapping({"a": "x", "b": "y +", "c": "1"})
    assert info.value.details["pointer"] == "/b"
    with pytest.raises(ConfigError) as info:
        field_from_mapping({"a": "x", "b": "y"})
    assert info.value.details["pointer"] == "/c"
