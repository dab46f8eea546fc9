import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from flowlab.argument import (ArgumentTrace, BranchError, UnwrapError, argument_gradient,
                              branch_field, check_log_growth, div_form_residual, equx_residual,
                              gradient_formula_error, observed_orders, oscillation, oscillation_of,
                              unwrap, unwrap_tangents, wrap)
from flowlab.field import Box, builtin, from_stream, rescale, rotate
from flowlab.lemma_lab import reconstruct_f
from flowlab.tracer import IntegratorConfig, Trajectory, trace_streamline

TWO_PI = 2 * math.pi


def test_unwrap_full_turn():
    rotation = from_stream("(x1^2+x2^2)/2", box=Box(-3, 3, -3, 3))
    traj = trace_streamline(rotation, (1.0, 0.0), IntegratorConfig(t_span=(0.0, TWO_PI), max_step=TWO_PI / 360))
    assert unwrap(traj).delta == pytest.approx(TWO_PI, abs=1e-6)


def test_unwrap_circle_polyline():
    s = np.linspace(0.0, TWO_PI, 361)
    traj = Trajectory.from_points(np.column_stack((np.cos(s), np.sin(s))), s,
                                  np.column_stack((-np.sin(s), np.cos(s))))
    assert unwrap(traj).delta == pytest.approx(TWO_PI, abs=1e-12)


def test_unwrap_straight_segment():
    pts = np.column_stack((np.linspace(0, 1, 50), 2 * np.linspace(0, 1, 50)))
    trace = unwrap(pts)
    assert np.ptp(trace.theta) <= 1e-15


def test_unwrap_archimedean_spiral():
    th = np.linspace(1.0, 1.0 + 10 * math.pi, 50001)
    pts = np.column_stack((th * np.cos(th), th * np.sin(th)))
    # segment directions approximate the tangent at segment midpoints
    mid0 = 0.5 * (th[0] + th[1])
    mid1 = 0.5 * (th[-2] + th[-1])
    exact = (mid1 + math.atan(mid1)) - (mid0 + math.atan(mid0))
    assert unwrap(pts).delta == pytest.approx(exact, abs=1e-4)


def test_unwrap_rejects_reversal():
    with pytest.raises(UnwrapError):
        unwrap_tangents([0, 1], [(1.0, 0.0), (-1.0, 0.0)])


def test_unwrap_refines_large_gaps(cosh):
    traj = trace_streamline(cosh, (0.2, 1.0), IntegratorConfig(t_span=(-1.0, 1.0)))
    keep = np.r_[0:len(traj) - 1:4, len(traj) - 1]
    coarse = Trajectory(traj.kind, traj.t[keep], traj.x[keep], traj.velocity[keep], traj.u[keep],
                        traj.events, traj.field)
    assert unwrap(coarse).delta == pytest.approx(unwrap(traj).delta, abs=1e-9)


def test_unwrap_stable_under_step_halving(cosh):
    deltas = []
    for step in (0.1, 0.05):
        traj = trace_streamline(cosh, (0.0, 0.5), IntegratorConfig(t_span=(-0.3, 0.3), max_step=step))
        assert traj.t[0] == -0.3 and traj.t[-1] == 0.3
        deltas.append(unwrap(traj).delta)
    assert abs(deltas[0] - deltas[1]) <= 1e-6


def test_branch_of_shear_is_constant(sine_shear):
    b = branch_field(sine_shear, (0.5, -1.0), 2.0, 81)
    assert b.anchor == 0.0
    assert np.nanmax(np.abs(b.phi)) == 0.0
    tilted = builtin("shear", V="2+sin(x2)", angle=math.pi / 3)[0]
    b = branch_field(tilted, (0.0, 0.0), 1.0, 81)
    assert np.nanmax(np.abs(b.phi[b.mask] - math.pi / 3)) <= 1e-12


def test_branch_matches_pointwise_direction(cosh):
    b = branch_field(cosh, (0.0, 0.0), 1.0, 201)
    X1, X2 = np.meshgrid(b.xs, b.ys)
    direct = np.arctan2(X2 * np.sinh(X1), -np.cosh(X1))
    assert np.max(np.abs(wrap(b.phi[b.mask] - direct[b.mask]))) <= 1e-12
    assert np.nanmax(np.abs(np.diff(b.phi, axis=0))) < math.pi / 2
    assert np.nanmax(np.abs(np.diff(b.phi, axis=1))) < math.pi / 2


def test_branch_refuses_stagnation(cellular):
    with pytest.raises(BranchError):
        branch_field(cellular, (0.0, 0.0), 1.0, 41)


def test_shear_oscillation_vanishes():
    f = builtin("shear", V="2+sin(x2)", angle=0.9)[0]
    for center, radius in [((0, 0), 1.0), ((3, -2), 5.0)]:
        assert oscillation(f, center, radius, 41).osc <= 1e-12


def test_cosh_oscillation_converges(cosh):
    coarse = oscillation(cosh, (0, 0), 1.0, 201)
    dense = oscillation_of(branch_field(cosh, (0, 0), 1.0, 801))
    assert 0 < coarse.osc < math.pi
    assert coarse.converged
    assert abs(coarse.osc - dense.osc) <= 1e-4


@given(st.floats(-1.5, 1.5), st.floats(-5, 5), st.integers(-3, 3))
def test_anchor_shift_leaves_oscillation_unchanged(c1, c2, k):
    f = builtin("cosh")[0]
    b = branch_field(f, (c1, c2), 0.5, 41)
    r0 = oscillation_of(b)
    r1 = oscillation_of(b.with_anchor(b.anchor + k * TWO_PI))
    assert r0.osc == r1.osc
    assert r0.min_at == r1.min_at and r0.max_at == r1.max_at


@given(st.floats(-1.5, 1.5), st.floats(-5, 5))
def test_gradient_branch_is_rotated_velocity_branch(c1, c2):
    f = builtin("cosh")[0]
    bv = branch_field(f, (c1, c2), 0.5, 41)
    bg = branch_field(f, (c1, c2), 0.5, 41, of="gradient")
    diff = bg.phi - bv.phi
    finite = diff[np.isfinite(diff)]
    assert np.max(np.abs(finite - finite[0])) <= 1e-9
    assert abs(wrap(finite[0] + math.pi / 2)) <= 1e-9


def test_rescaled_oscillation_identity(cosh):
    small = oscillation(cosh, (0, 0), 1.0, 201)
    big = oscillation(rescale(cosh, 0.5), (0, 0), 2.0, 201)
    assert abs(small.osc - big.osc) <= 1e-6


def test_rotation_shifts_branch(cosh):
    b = branch_field(cosh, (0, 0), 0.5, 41)
    br = branch_field(rotate(cosh, 0.8), (0, 0), 0.5, 41)
    assert abs(wrap(br.anchor - b.anchor - 0.8)) <= 1e-12
    # rotated grids do not share nodes, so agreement is at discretization level
    fine = oscillation_of(branch_field(cosh, (0, 0), 0.5, 801)).osc
    fine_rotated = oscillation_of(branch_field(rotate(cosh, 0.8), (0, 0), 0.5, 801)).osc
    assert fine == pytest.approx(fine_rotated, abs=1e-4)


def test_gradient_formula_order(cosh):
    pts = np.random.default_rng(0).uniform(-1.5, 1.5, (1000, 2))
    errors = [gradient_formula_error(cosh, pts, h) for h in (0.02, 0.01, 0.005)]
    assert all(o >= 1.8 for o in observed_orders(errors))


def test_argument_gradient_of_shear_vanishes(sine_shear):
    pts = np.random.default_rng(1).uniform(-3, 3, (50, 2))
    assert np.max(np.abs(argument_gradient(sine_shear, pts))) == 0.0


def test_div_form_residual_order(cosh):
    pts = np.random.default_rng(2).uniform(-1.5, 1.5, (200, 2))
    res = [div_form_residual(cosh, pts, h) for h in (0.02, 0.01, 0.005)]
    ratios = [a / b for a, b in zip(res, res[1:])]
    assert all(3.2 <= r <= 4.8 for r in ratios)
    assert all(1.8 <= o <= 2.2 for o in observed_orders(res))


def test_differentiated_semilinear_identity(cosh):
    rf = reconstruct_f(cosh)
    pts = np.random.default_rng(3).uniform(-1.5, 1.5, (500, 2))
    assert equx_residual(cosh, rf, pts) <= 1e-3


def test_log_growth_on_shear(sine_shear):
    for rec in check_log_growth(sine_shear, [2, 4, 8]):
        assert rec.measured_osc <= 1e-12
        assert rec.status == "pass"


def test_log_growth_with_hypothesis(cosh):
    slow = rescale(cosh, 0.25)
    for rec in check_log_growth(slow, [2, 4]):
        assert rec.hypothesis_ok
        assert rec.status == "pass"
        assert rec.measured_osc <= rec.bound


def test_log_growth_flags_failed_hypothesis(cosh):
    recs = check_log_growth(cosh, [2, 4, 8])
    for rec in recs:
        assert not rec.hypothesis_ok
        assert rec.status == "hypothesis-failed"
        assert rec.hypothesis_failure is not None
        assert rec.bound_holds


def test_argument_trace_helpers():
    tr = ArgumentTrace(np.arange(3.0), np.array([0.0, 1.0, 0.5]))
    assert tr.delta == 0.5
    assert tr.total_variation() == 1.5
