import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from flowlab import expr as ex
from flowlab.field import (Box, FieldError, FieldFileError, StreamFunction, VectorField, builtin,
                           divergence, estimate_eta, euler_residual, field_from_mapping, load_field,
                           rescale, rotate, shift, stream_eval, stream_grad, stream_function,
                           vorticity)
from flowlab.tracer import IntegratorConfig, trace_streamline

BUILTINS = {
    "cellular": dict(alpha=1.0, beta=1.0),
    "cellular_23": dict(alpha=2.0, beta=3.0),
    "cosh": {},
    "shear": dict(V="2+sin(x2)", W="2*x2-cos(x2)"),
    "shear_tilted": dict(V="1.5+cos(2*x2)", W="1.5*x2+sin(2*x2)/2", angle=0.4),
    "couette": dict(a=1.0, b=2.0),
}


def make(key):
    name = key.split("_")[0]
    return builtin(name, **BUILTINS[key])


def rand_points(box: Box, n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    return np.column_stack((rng.uniform(box.x1min, box.x1max, n), rng.uniform(box.x2min, box.x2max, n)))


def test_cellular_definition():
    f, p, u = builtin("cellular", alpha=1.0, beta=1.0)
    for x in [(0.3, 1.1), (-2.0, 0.7)]:
        assert u.value(x) == pytest.approx(math.sin(x[0]) * math.sin(x[1]), abs=1e-15)
        assert ex.evaluate(p.p, x, f.env) == pytest.approx(
            math.cos(2 * x[0]) / 4 + math.cos(2 * x[1]) / 4, abs=1e-15)


def test_cosh_definition():
    f, p, u = builtin("cosh")
    x = (0.7, -1.3)
    assert f.velocity(x) == pytest.approx([-math.cosh(0.7), -1.3 * math.sinh(0.7)])
    assert ex.evaluate(p.p, x) == pytest.approx(-math.cosh(1.4) / 4 + 1.3**2 / 2)
    assert stream_eval(u, (0.0, 1.0)) == 1.0


def test_constant_shear():
    f, p, u = builtin("shear", V="1")
    assert tuple(f.velocity((3.0, -2.0))) == (1.0, 0.0)
    assert stream_eval(u, (5.0, 2.0)) == -2.0
    assert ex.evaluate(p.p, (1.0, 1.0)) == ex.evaluate(p.p, (-4.0, 2.0))


def test_shear_requires_matching_antiderivative():
    with pytest.raises(FieldError):
        builtin("shear", V="2+sin(x2)", W="2*x2+cos(x2)")


@pytest.mark.parametrize("key", sorted(BUILTINS))
def test_divergence_vanishes(key):
    f, _, _ = make(key)
    pts = rand_points(f.box, 1000)
    div = ex.evaluate_array(divergence(f), pts[:, 0], pts[:, 1], f.env)
    assert np.max(np.abs(div)) <= 1e-12


def test_divergence_of_radial_field():
    f = VectorField(ex.parse("x1"), ex.parse("0"))
    assert ex.to_string(divergence(f)) == "1"


def test_vorticity_examples(cosh, cellular, sine_shear):
    for x in [(0.2, 0.9), (-1.0, 1.7)]:
        assert ex.evaluate(vorticity(cosh), x) == pytest.approx(x[1] * math.cosh(x[0]))
        assert ex.evaluate(vorticity(cellular), x, cellular.env) == pytest.approx(
            -2 * math.sin(x[0]) * math.sin(x[1]))
        assert ex.evaluate(vorticity(sine_shear), x) == pytest.approx(-math.cos(x[1]))


def test_euler_residuals(cellular, cosh):
    grid = Box(-2.0, 2.0, -2.0, 2.0)
    assert euler_residual(cellular, None, grid, 41) <= 1e-10
    assert euler_residual(cosh, None, grid, 41) <= 1e-10
    # without pressure the cellular flow is not a solution; at (pi/4, pi/4) |v.grad v| = 1/2
    assert euler_residual(cellular, ex.parse("0"), grid, 41) >= 0.1


def test_estimate_eta_examples(sine_shear, cellular, cosh):
    for box in (Box(-4, 4, -4, 4), Box(10, 20, -30, 5)):
        b = estimate_eta(sine_shear, box)
        assert b.eta_lo == pytest.approx(1.0, abs=1e-6)
        assert b.eta_hi == pytest.approx(3.0, abs=1e-6)
    assert estimate_eta(cellular).eta_lo <= 1e-8
    assert estimate_eta(cellular).stagnation
    b = estimate_eta(cosh, Box(-2, 2, -2, 2))
    assert b.eta_lo == pytest.approx(1.0, abs=1e-12)
    assert b.argmin[0] == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("key", sorted(BUILTINS))
def test_stream_gradient_is_rotated_velocity(key):
    f, _, u = make(key)
    for x in rand_points(f.box, 100, 1):
        assert np.max(np.abs(stream_grad(u, x) - np.array([f.velocity(x)[1], -f.velocity(x)[0]]))) <= 1e-10


@pytest.mark.parametrize("key", sorted(BUILTINS))
def test_quadrature_agrees_with_symbolic(key):
    f, _, u = make(key)
    q = StreamFunction(f)  # no expression: quadrature mode
    assert q.mode == "quadrature"
    for x in rand_points(f.box, 100, 2):
        assert abs(q.value(x) - u.value(x)) <= 1e-8


@pytest.mark.parametrize("key", ["cellular", "cosh", "shear_tilted"])
def test_quadrature_gradient_and_path_independence(key):
    f, _, _ = make(key)
    q = StreamFunction(f)
    for x in rand_points(f.box, 20, 3):
        assert abs(q.quadrature(x, "segment") - q.quadrature(x, "L")) <= 1e-7
        assert np.max(np.abs(q.gradient(x) - np.array([f.velocity(x)[1], -f.velocity(x)[0]]))) <= 1e-7


def test_shear_without_antiderivative_uses_quadrature():
    f, _, u = builtin("shear", V="2+sin(x2)")
    assert u.mode == "quadrature"
    assert u.value((0.3, 1.2)) == pytest.approx(-(2 * 1.2 - math.cos(1.2) + 1), abs=1e-8)


@pytest.mark.parametrize("seed", [0.3, 1.0, -1.7])
def test_vorticity_constant_along_streamlines(cosh, seed):
    traj = trace_streamline(cosh, (0.0, seed), IntegratorConfig(t_span=(-5, 5)))
    w = ex.evaluate_array(vorticity(cosh), traj.x[:, 0], traj.x[:, 1])
    assert np.max(np.abs(w - seed)) <= 1e-5


@given(st.floats(0.2, 5.0), st.floats(-3, 3), st.floats(-3, 3))
def test_rescale_shift_rotate_stay_divergence_free(factor, y1, y2):
    f, _, _ = builtin("cosh")
    for g in (rescale(f, factor), shift(f, (y1, y2)), rotate(f, y1)):
        pts = rand_points(Box(-1, 1, -1, 1), 20)
        div = ex.evaluate_array(divergence(g), pts[:, 0], pts[:, 1], g.env)
        scale = 1 + np.max(np.abs(g.velocity_grid(pts[:, 0], pts[:, 1])))
        assert np.max(np.abs(div)) <= 1e-10 * scale
        u = stream_function(g)
        assert u.value((0.0, 0.0)) == 0.0


def test_rescale_of_shear_is_same_field(sine_shear):
    g = rescale(sine_shear, 2.0)
    for x in [(0.1, 0.4), (-2.0, 3.0)]:
        assert g.velocity(x) == pytest.approx(sine_shear.velocity((2 * x[0], 2 * x[1])), rel=1e-15)


def test_shift_then_rescale_composes(cosh):
    a = rescale(shift(cosh, (0.5, -1.0)), 2.0)
    for x in [(0.3, 0.2), (1.0, -2.0)]:
        assert a.velocity(x) == pytest.approx(cosh.velocity((2 * x[0] + 0.5, 2 * x[1] - 1.0)), rel=1e-14)


@pytest.mark.parametrize("name", ["cellular", "cosh", "shear", "couette"])
def test_shipped_files_load(name):
    from flowlab.cli import FIELD_DIR

    f = load_field(FIELD_DIR / f"{name}.toml")
    assert f.name == name


def test_field_file_errors_carry_line(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text('name = "bad"\n\n[field]\nv1 = "1+"\nv2 = "x1"\n')
    with pytest.raises(FieldFileError) as info:
        load_field(bad)
    assert info.value.line == 4
    assert str(info.value).startswith(f"{bad}:4:")
    broken = tmp_path / "broken.toml"
    broken.write_text('name = "x"\n[field\n')
    with pytest.raises(FieldFileError) as info:
        load_field(broken)
    assert info.value.line == 2


def test_field_from_mapping_stream_and_params():
    f = field_from_mapping({"field": {"stream": "k*x2*cosh(x1)"}, "params": {"k": 2.0},
                            "box": {"x1": [-1, 1], "x2": [-1, 1]}})
    assert f.velocity((0.0, 0.0)) == pytest.approx([-2.0, 0.0])
    with pytest.raises(FieldError):
        field_from_mapping({"field": {"v1": "a*x1", "v2": "0"}})
