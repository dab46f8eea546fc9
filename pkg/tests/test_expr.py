import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from flowlab import expr as ex
from flowlab.expr import Binary, Constant, Parameter, Unary, Variable

ENV = {"a": 1.3, "b": -0.7}

leaves = st.one_of(
    st.sampled_from([Variable("x1"), Variable("x2"), Parameter("a"), Parameter("b")]),
    st.floats(-3, 3, allow_nan=False).map(lambda v: Constant(round(v, 3))),
)


def _tree(children):
    return st.one_of(
        st.builds(Unary, st.sampled_from(["neg", "sin", "cos", "tanh"]), children),
        st.builds(Binary, st.sampled_from(["add", "sub", "mul"]), children, children),
        st.builds(lambda c, k: Binary("pow", c, Constant(float(k))), children, st.integers(0, 3)),
    )


expressions = st.recursive(leaves, _tree, max_leaves=8)
points = st.tuples(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))


def test_parse_and_evaluate_examples():
    e = ex.parse("sin(a*x1)*sin(b*x2)")
    assert ex.evaluate(e, (0.0, 0.0), {"a": 1, "b": 1}) == 0.0
    assert ex.evaluate(ex.parse("x2*cosh(x1)"), (0.0, 3.0)) == 3.0
    assert ex.evaluate(ex.parse("cosh(x1)"), (0.0, 0.0)) == 1.0
    assert ex.evaluate(ex.parse("x1^2+x2^2"), (3.0, 4.0)) == 25.0


def test_syntax_error_reports_offset():
    with pytest.raises(ex.ExprSyntaxError) as info:
        ex.parse("1+")
    assert info.value.offset == 2


def test_domain_error_names_subtree():
    with pytest.raises(ex.ExprDomainError, match="ln"):
        ex.evaluate(ex.parse("ln(x1)"), (-1.0, 0.0))
    with pytest.raises(ex.ExprDomainError):
        ex.evaluate_array(ex.parse("sqrt(x1)"), np.array([-1.0]), np.array([0.0]))


def test_unbound_parameter():
    with pytest.raises(ex.UnboundParameterError):
        ex.evaluate(ex.parse("a*x1"), (1.0, 1.0))


def test_pi_is_a_constant():
    assert ex.parameters(ex.parse("pi*x1")) == set()
    assert ex.evaluate(ex.parse("pi"), (0, 0)) == math.pi


@pytest.mark.parametrize("text, var, expected", [
    ("x2*cosh(x1)", "x1", "x2*sinh(x1)"),
    ("sin(a*x1)", "x2", "0"),
    ("sin(a*x1)*sin(b*x2)", "x1", "a*cos(a*x1)*sin(b*x2)"),
])
def test_differentiate_examples(text, var, expected):
    assert ex.to_string(ex.differentiate(ex.parse(text), var)) == expected


@pytest.mark.parametrize("text, expected", [
    ("0*cosh(x1)+x2", "x2"),
    ("1*sin(x1)", "sin(x1)"),
    ("2+3", "5"),
])
def test_simplify_examples(text, expected):
    assert ex.to_string(ex.simplify(ex.parse(text))) == expected


@given(expressions, points)
def test_print_parse_round_trip(e, x):
    again = ex.parse(ex.to_string(e))
    assert ex.evaluate(again, x, ENV) == ex.evaluate(e, x, ENV)


@given(expressions, points, st.sampled_from(["x1", "x2"]))
def test_derivative_matches_central_difference(e, x, var):
    h = 1e-5
    d = ex.evaluate(ex.differentiate(e, var), x, ENV)
    step = (h, 0.0) if var == "x1" else (0.0, h)
    fp = ex.evaluate(e, (x[0] + step[0], x[1] + step[1]), ENV)
    fm = ex.evaluate(e, (x[0] - step[0], x[1] - step[1]), ENV)
    assert abs(d - (fp - fm) / (2 * h)) <= 1e-6 * (1 + abs(d))


@given(expressions, points)
def test_simplify_preserves_value(e, x):
    a = ex.evaluate(e, x, ENV)
    b = ex.evaluate(ex.simplify(e), x, ENV)
    assert b == pytest.approx(a, rel=1e-12, abs=1e-12)


@given(expressions, st.lists(points, min_size=1, max_size=5))
def test_compiled_and_array_evaluation_agree(e, xs):
    fast = ex.compile_scalar(e, ENV)
    arr = np.array(xs)
    values = ex.evaluate_array(e, arr[:, 0], arr[:, 1], ENV)
    for (x1, x2), v in zip(xs, np.broadcast_to(values, (len(xs),))):
        ref = ex.evaluate(e, (x1, x2), ENV)
        assert fast(x1, x2) == pytest.approx(ref, rel=1e-12, abs=1e-12)
        assert v == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_substitute_and_laplacian():
    e = ex.parse("x2*cosh(x1)")
    lap = ex.laplacian(e)
    for x in [(0.3, -1.2), (1.1, 0.4)]:
        assert ex.evaluate(lap, x) == pytest.approx(ex.evaluate(e, x), rel=1e-14)
    moved = ex.substitute(e, {"x1": ex.parse("x1+1")})
    assert ex.evaluate(moved, (0.0, 2.0)) == pytest.approx(2 * math.cosh(1.0))
