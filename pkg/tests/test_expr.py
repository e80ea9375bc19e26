import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hcalc import expr
from hcalc.errors import ExprSyntaxError, NonsmoothPointError, OutOfDomainError, UnknownIdentifierError

VARS = ["x1", "y1", "t"]


def test_parse_and_evaluate():
    node = expr.parse_expr("eta1 + 2*tau", ["eta1", "tau"])
    assert expr.evaluate(node, [1, 3]) == 7
    zero = expr.parse_expr("0", ["eta1"])
    assert isinstance(zero, expr.Const) and zero.value == 0
    assert expr.evaluate(expr.parse_expr("sin(x1)*y1", VARS), [0, 5, 1]) == 0


def test_syntax_errors_carry_offsets():
    with pytest.raises(ExprSyntaxError) as exc:
        expr.parse_expr("x1 + * y1", VARS)
    assert exc.value.offset == 5
    with pytest.raises(ExprSyntaxError):
        expr.parse_expr("", VARS)
    with pytest.raises(ExprSyntaxError):
        expr.parse_expr("x1^1.5", VARS)
    with pytest.raises(UnknownIdentifierError) as exc:
        expr.parse_expr("x1 + eta1", VARS)
    assert exc.value.name == "eta1"


def test_fields():
    assert expr.eval_field(expr.ConstantField(2.5, 3), [1, 2, 3]) == 2.5
    f = expr.ExprField("eta1^2", ["eta1"])
    assert f([3.0]) == 9
    g = expr.GridField.sample(lambda p: p[..., 0], [0.0], [1.0], 5)
    assert g([0.5]) == pytest.approx(0.5)
    with pytest.raises(OutOfDomainError):
        g([1.5])
    with pytest.raises(ValueError):
        expr.GridField([np.array([0.0])], np.array([1.0]))


def test_partials():
    f = expr.ExprField("eta1 + 2*tau", ["eta1", "tau"])
    assert expr.partial(f, 0, [0.3, -2.0]) == 1
    assert expr.partial(expr.ExprField("x1^2", VARS), 0, [3.0, 0, 0]) == 6
    with pytest.raises(NonsmoothPointError):
        expr.partial(expr.ExprField("abs(t)", VARS), 2, [0.0, 0.0, 0.0])
    assert not expr.ExprField("sqrt(abs(t))", VARS).smooth


def test_grid_reproduces_multilinear():
    fn = lambda p: 1 + 2 * p[..., 0] - p[..., 1] + 3 * p[..., 0] * p[..., 1]
    g = expr.GridField.sample(fn, [0, 0], [1, 2], [4, 7])
    pts = np.random.default_rng(0).uniform([0, 0], [1, 2], (200, 2))
    np.testing.assert_allclose(g(pts), fn(pts), atol=1e-12)


# random smooth expressions for the round-trip and dual-vs-FD properties
leaf = st.one_of(st.sampled_from(VARS), st.floats(-3, 3, allow_nan=False).map(lambda c: f"{c:.3f}"))


def _combine(children):
    return st.one_of(
        st.tuples(children, st.sampled_from("+-*"), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        st.tuples(st.sampled_from(["sin", "cos", "exp"]), children).map(lambda t: f"{t[0]}({t[1]})"),
        st.tuples(children, st.integers(0, 3)).map(lambda t: f"({t[0]})^{t[1]}"),
        children.map(lambda c: f"-({c})"),
    )


smooth_exprs = st.recursive(leaf, _combine, max_leaves=6)


@settings(max_examples=60, deadline=None)
@given(smooth_exprs)
def test_pretty_round_trip(text):
    node = expr.parse_expr(text, VARS)
    again = expr.parse_expr(expr.pretty(node), VARS)
    pts = np.random.default_rng(2).uniform(-1, 1, (100, 3))
    a, b = expr.ExprField(node, VARS)(pts), expr.ExprField(again, VARS)(pts)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(smooth_exprs, st.integers(0, 2))
def test_dual_matches_finite_difference(text, axis):
    f = expr.ExprField(text, VARS)
    pts = np.random.default_rng(3).uniform(-1, 1, (20, 3))
    exact = f.derivative(pts, axis)
    fd = expr.central_difference(f, pts, expr._direction(axis, 3), 1e-4)
    np.testing.assert_allclose(fd, exact, atol=1e-6 * (1 + np.max(np.abs(exact))))
