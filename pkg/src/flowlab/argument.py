"""Continuous arguments of curve tangents and of the field direction.

A branch of the field argument over a ball is built on a square grid by
propagating from the center: first along the center row, then up and down
each column, each node taking the representative nearest its parent.
Values are stored relative to the center so that oscillations do not
depend on the chosen 2*pi anchor, not even in the last bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import expr as ex
from .constants import constants
from .field import TOL_STAGNATION, Box, VectorField, estimate_eta, rescale, rotate, shift  # noqa: F401
from .tracer import Trajectory, velocity_function

TWO_PI = 2.0 * math.pi


class BranchError(Exception):
    pass


class UnwrapError(Exception):
    pass


def wrap(angle):
    """Map angles to [-pi, pi)."""
    return (np.asarray(angle) + math.pi) % TWO_PI - math.pi


# ---------------------------------------------------------------- curves

@dataclass(frozen=True)
class ArgumentTrace:
    t: np.ndarray
    theta: np.ndarray
    refinements: int = 0

    @property
    def delta(self) -> float:
        return float(self.theta[-1] - self.theta[0])

    def total_variation(self) -> float:
        return float(np.sum(np.abs(np.diff(self.theta))))


def _accumulate(raw: np.ndarray) -> np.ndarray:
    steps = wrap(np.diff(raw))
    theta = np.empty_like(raw)
    theta[0] = raw[0] % TWO_PI
    theta[1:] = theta[0] + np.cumsum(steps)
    return theta


def unwrap_tangents(t, tangents) -> ArgumentTrace:
    """Unwrap given tangent vectors; every turn between samples must stay below pi."""
    tangents = np.asarray(tangents, dtype=float)
    if np.any(np.hypot(tangents[:, 0], tangents[:, 1]) == 0):
        raise UnwrapError("zero tangent vector")
    raw = np.arctan2(tangents[:, 1], tangents[:, 0])
    if len(raw) > 1 and np.any(np.abs(wrap(np.diff(raw))) >= math.pi - 1e-12):
        raise UnwrapError("tangent reverses between samples; argument is ambiguous")
    return ArgumentTrace(np.asarray(t, dtype=float), _accumulate(raw))


def polyline_directions(points) -> np.ndarray:
    return np.diff(np.asarray(points, dtype=float), axis=0)


def unwrap(curve, max_refine: int = 12, max_gap: float = math.pi / 2) -> ArgumentTrace:
    """Continuous tangent angle along a trajectory or a bare polyline.

    Trajectories use their stored tangents; where consecutive raw angles
    differ by more than ``max_gap`` and a field is attached, midpoints are
    inserted from the integrator until the gaps close.  Bare polylines use
    segment directions (one sample per segment).
    """
    if not isinstance(curve, Trajectory):
        pts = np.asarray(curve, dtype=float)
        return unwrap_tangents(np.arange(len(pts) - 1, dtype=float), polyline_directions(pts))
    t = np.array(curve.t, dtype=float)
    tang = np.array(curve.velocity, dtype=float)
    rounds = 0
    if curve.field is not None:
        rhs = velocity_function(curve.field, curve.kind)
        for rounds in range(max_refine + 1):
            raw = np.arctan2(tang[:, 1], tang[:, 0])
            bad = np.nonzero(np.abs(wrap(np.diff(raw))) > max_gap)[0]
            if len(bad) == 0:
                break
            if rounds == max_refine:
                raise UnwrapError("argument gap persists after refinement")
            mids = 0.5 * (t[bad] + t[bad + 1])
            new_tang = np.array([rhs(*curve.state_at(m)) for m in mids])
            t = np.insert(t, bad + 1, mids)
            tang = np.insert(tang, bad + 1, new_tang, axis=0)
    trace = unwrap_tangents(t, tang)
    return ArgumentTrace(trace.t, trace.theta, rounds)


# ---------------------------------------------------------------- branch over a ball

@dataclass(frozen=True, eq=False)
class BranchField:
    center: tuple[float, float]
    radius: float
    n: int
    spacing: float
    xs: np.ndarray
    ys: np.ndarray
    relative: np.ndarray  # argument minus its center value; nan outside the ball
    anchor: float
    mask: np.ndarray
    boundary_points: np.ndarray
    boundary_relative: np.ndarray

    @property
    def phi(self) -> np.ndarray:
        return self.anchor + self.relative

    def with_anchor(self, anchor: float) -> "BranchField":
        return BranchField(self.center, self.radius, self.n, self.spacing, self.xs, self.ys,
                           self.relative, anchor, self.mask, self.boundary_points,
                           self.boundary_relative)

    def value_at(self, i: int, j: int) -> float:
        return float(self.anchor + self.relative[i, j])


def _direction_grid(f: VectorField, X1, X2, of: str):
    v1, v2 = f.velocity_grid(X1, X2)
    if of == "velocity":
        return v1, v2
    if of == "gradient":
        return v2, -v1
    raise ValueError(f"unknown argument target {of!r}")


def branch_field(f: VectorField, center=(0.0, 0.0), radius: float = 1.0, n: int = 201,
                 of: str = "velocity", boundary: bool = True) -> BranchField:
    """Single continuous branch of the field argument over a ball."""
    if n % 2 == 0:
        n += 1
    c1, c2 = float(center[0]), float(center[1])
    xs = c1 + np.linspace(-radius, radius, n)
    ys = c2 + np.linspace(-radius, radius, n)
    X1, X2 = np.meshgrid(xs, ys)  # row index follows x2, column index x1
    spacing = 2.0 * radius / (n - 1)
    mask = np.hypot(X1 - c1, X2 - c2) <= radius * (1 + 1e-12)
    w1, w2 = _direction_grid(f, X1, X2, of)
    speed = np.hypot(w1, w2)
    if np.any(speed[mask] <= TOL_STAGNATION):
        k = np.argmin(np.where(mask, speed, np.inf))
        raise BranchError(f"stagnation on the grid near ({X1.flat[k]:.6g}, {X2.flat[k]:.6g})")
    raw = np.arctan2(w2, w1)
    mid = n // 2
    rel = np.full((n, n), np.nan)
    # center row, outward from the center
    row = raw[mid]
    rel_row = np.zeros(n)
    rel_row[mid + 1:] = np.cumsum(wrap(row[mid + 1:] - row[mid:-1]))
    rel_row[:mid] = np.cumsum(wrap(row[:mid] - row[1:mid + 1])[::-1])[::-1]
    rel[mid] = rel_row
    # columns, outward from the center row
    rel[mid + 1:] = rel_row + np.cumsum(wrap(raw[mid + 1:] - raw[mid:-1]), axis=0)
    rel[:mid] = rel_row + np.cumsum(wrap(raw[:mid] - raw[1:mid + 1])[::-1], axis=0)[::-1]
    rel = np.where(mask, rel, np.nan)
    _check_consistency(rel)
    anchor = float(raw[mid, mid] % TWO_PI)
    bpts = np.empty((0, 2))
    brel = np.empty(0)
    if boundary:
        m = 4 * (n - 1)
        ang = np.linspace(0.0, TWO_PI, m, endpoint=False)
        bpts = np.column_stack((c1 + radius * np.cos(ang), c2 + radius * np.sin(ang)))
        b1, b2 = _direction_grid(f, bpts[:, 0], bpts[:, 1], of)
        if np.any(np.hypot(b1, b2) <= TOL_STAGNATION):
            raise BranchError("stagnation on the ball boundary")
        braw = np.arctan2(b2, b1)
        # parent: nearest grid node inside the ball
        ci = np.clip(np.round((bpts[:, 1] - ys[0]) / spacing).astype(int), 0, n - 1)
        cj = np.clip(np.round((bpts[:, 0] - xs[0]) / spacing).astype(int), 0, n - 1)
        for _ in range(3):
            outside = ~mask[ci, cj]
            if not outside.any():
                break
            ci = np.where(outside, ci - np.sign(ci - mid), ci)
            cj = np.where(outside, cj - np.sign(cj - mid), cj)
        brel = rel[ci, cj] + wrap(braw - raw[ci, cj])
    return BranchField((c1, c2), radius, n, spacing, xs, ys, rel, anchor, mask, bpts, brel)


def _check_consistency(rel: np.ndarray) -> None:
    for d in (np.diff(rel, axis=0), np.diff(rel, axis=1)):
        finite = d[np.isfinite(d)]
        if finite.size and np.max(np.abs(finite)) >= math.pi:
            raise BranchError("adjacent nodes differ by pi or more; refine the grid")


# ---------------------------------------------------------------- oscillation

@dataclass(frozen=True)
class OscillationResult:
    center: tuple[float, float]
    radius: float
    spacing: float
    osc: float
    min_at: tuple[float, float]
    max_at: tuple[float, float]
    n: int
    converged: bool


def _extremes(b: BranchField, anchor_shift: float = 0.0):
    X1, X2 = np.meshgrid(b.xs, b.ys)
    vals = np.concatenate((b.relative[b.mask], b.boundary_relative))
    pts = np.concatenate((np.column_stack((X1[b.mask], X2[b.mask])), b.boundary_points))
    kmin, kmax = int(np.argmin(vals)), int(np.argmax(vals))
    osc = float(vals[kmax] - vals[kmin])
    return osc, tuple(map(float, pts[kmin])), tuple(map(float, pts[kmax]))


def oscillation_of(b: BranchField) -> OscillationResult:
    osc, pmin, pmax = _extremes(b)
    return OscillationResult(b.center, b.radius, b.spacing, osc, pmin, pmax, b.n, True)


def oscillation(f: VectorField, center=(0.0, 0.0), radius: float = 1.0, n: int = 201,
                tol: float = 1e-4, n_max: int = 1601, of: str = "velocity") -> OscillationResult:
    """max - min of a branch over the ball, doubling the grid until stable."""
    b = branch_field(f, center, radius, n, of)
    osc, pmin, pmax = _extremes(b)
    converged = False
    while 2 * b.n - 1 <= n_max:
        b = branch_field(f, center, radius, 2 * b.n - 1, of)
        new, pmin, pmax = _extremes(b)
        change = abs(new - osc)
        osc = new
        if change < tol:
            converged = True
            break
    return OscillationResult(b.center, radius, b.spacing, osc, pmin, pmax, b.n, converged)


# ---------------------------------------------------------------- log growth

@dataclass(frozen=True)
class GrowthRecord:
    radius: float
    eta: float
    eta_source: str
    C_eta: float
    bound: float
    measured_osc: float
    spacing: float
    hypothesis_ok: bool
    hypothesis_failure: tuple[float, float] | None
    hypothesis_osc: float
    bound_holds: bool

    @property
    def status(self) -> str:
        if not self.hypothesis_ok:
            return "hypothesis-failed"
        return "pass" if self.bound_holds else "fail"


def small_ball_scan(b: BranchField, radius: float, step: float = 0.5, ball: float = 1.0,
                    limit: float = math.pi / 4):
    """Oscillation over unit balls centered on a lattice covering B(center, radius).

    Returns (all_ok, first failing center or None, largest oscillation seen).
    """
    h = b.spacing
    stride = max(1, round(step / h))
    mid = b.n // 2
    reach = int(math.floor(ball / h + 1e-9))
    di, dj = np.meshgrid(np.arange(-reach, reach + 1), np.arange(-reach, reach + 1), indexing="ij")
    inside = (di * h) ** 2 + (dj * h) ** 2 <= ball * ball * (1 + 1e-12)
    di, dj = di[inside], dj[inside]
    k = int(radius / (stride * h) + 1e-9)
    worst = 0.0
    for a in range(-k, k + 1):
        for c in range(-k, k + 1):
            ci, cj = mid + a * stride, mid + c * stride
            if (a * a + c * c) * (stride * h) ** 2 > radius * radius * (1 + 1e-12):
                continue
            vals = b.relative[ci + di, cj + dj]
            osc = float(np.nanmax(vals) - np.nanmin(vals))
            worst = max(worst, osc)
            if osc >= limit:
                return False, (float(b.xs[cj]), float(b.ys[ci])), osc
    return True, None, worst


def check_log_growth(f: VectorField, radii: Sequence[float], eta: float | None = None,
                     spacing: float = 0.05, scan_step: float = 0.5) -> list[GrowthRecord]:
    """Compare osc over B(0, R) with C_eta ln R for each R.

    The small-ball hypothesis (osc < pi/4 on unit balls) is scanned on a
    lattice of centers; when it fails the record says so and the bound is
    not claimed, although the comparison is still recorded.
    """
    records = []
    for R in radii:
        R = float(R)
        if R < 2:
            raise ValueError("radii must be at least 2")
        if eta is None:
            e, source = estimate_eta(f, Box.square(R + 1), 201).eta, "estimated on box"
        else:
            e, source = float(eta), "given"
        if not 0 < e <= 1:
            raise ValueError(f"eta on B(0,{R}) is {e!r}; hypothesis fails")
        n = 2 * int(math.ceil((R + 1) / spacing)) + 1
        b = branch_field(f, (0.0, 0.0), R + 1, n, boundary=False)
        ok, where, hyp_osc = small_ball_scan(b, R, scan_step)
        X1, X2 = np.meshgrid(b.xs, b.ys)
        inner = np.hypot(X1, X2) <= R
        measured = float(np.nanmax(b.relative[inner]) - np.nanmin(b.relative[inner]))
        C = constants(e).C_eta
        bound = C * math.log(R)
        records.append(GrowthRecord(R, e, source, C, bound, measured, b.spacing, ok, where,
                                    hyp_osc, measured <= bound))
    return records


# ---------------------------------------------------------------- differential identities

def _relative_angle(a1, a2, b1, b2):
    """Angle from vector a to vector b in (-pi, pi]."""
    return np.arctan2(a1 * b2 - a2 * b1, a1 * b1 + a2 * b2)


def argument_gradient(f: VectorField, points) -> np.ndarray:
    """(v1 grad v2 - v2 grad v1) / |v|^2, the gradient of any branch."""
    p = np.asarray(points, dtype=float)
    x1, x2 = p[:, 0], p[:, 1]
    v1, v2 = f.velocity_grid(x1, x2)
    d11, d12, d21, d22 = (ex.evaluate_array(e, x1, x2, f.env) for e in f.jacobian)
    s = v1 * v1 + v2 * v2
    return np.column_stack(((v1 * d21 - v2 * d11) / s, (v1 * d22 - v2 * d12) / s))


def argument_gradient_fd(f: VectorField, points, h: float) -> np.ndarray:
    """Central differences of a local branch with step h."""
    p = np.asarray(points, dtype=float)
    x1, x2 = p[:, 0], p[:, 1]
    w1, w2 = f.velocity_grid(x1, x2)
    out = np.empty_like(p)
    for axis in (0, 1):
        e = np.zeros(2)
        e[axis] = h
        a1, a2 = f.velocity_grid(x1 + e[0], x2 + e[1])
        b1, b2 = f.velocity_grid(x1 - e[0], x2 - e[1])
        forward = _relative_angle(w1, w2, a1, a2)
        backward = _relative_angle(w1, w2, b1, b2)
        out[:, axis] = (forward - backward) / (2 * h)
    return out


def gradient_formula_error(f: VectorField, points, h: float) -> float:
    return float(np.max(np.abs(argument_gradient_fd(f, points, h) - argument_gradient(f, points))))


def div_form_residual(f: VectorField, points, h: float) -> float:
    """Max of a conservative 5-point approximation of div(|w|^2 grad phi)."""
    p = np.asarray(points, dtype=float)
    x1, x2 = p[:, 0], p[:, 1]
    w1, w2 = f.velocity_grid(x1, x2)
    total = np.zeros(len(p))
    for e in ((h, 0.0), (0.0, h)):
        a1, a2 = f.velocity_grid(x1 + e[0], x2 + e[1])
        b1, b2 = f.velocity_grid(x1 - e[0], x2 - e[1])
        ma1, ma2 = f.velocity_grid(x1 + e[0] / 2, x2 + e[1] / 2)
        mb1, mb2 = f.velocity_grid(x1 - e[0] / 2, x2 - e[1] / 2)
        flux_plus = (ma1**2 + ma2**2) * _relative_angle(w1, w2, a1, a2)
        flux_minus = (mb1**2 + mb2**2) * _relative_angle(b1, b2, w1, w2)
        total += (flux_plus - flux_minus) / (h * h)
    return float(np.max(np.abs(total)))


def observed_orders(errors: Sequence[float], ratio: float = 2.0) -> list[float]:
    return [math.log(a / b) / math.log(ratio) for a, b in zip(errors, errors[1:])]


def equx_residual(f: VectorField, rf, points) -> float:
    """Max of |Lap(u_x1) + f'(u) u_x1| with f' from a reconstructed profile.

    Points whose u value lies outside the profile's range are ignored.
    """
    from .field import stream_function

    p = np.asarray(points, dtype=float)
    x1, x2 = p[:, 0], p[:, 1]
    u = stream_function(f).values(x1, x2)
    inside = (u >= rf.s_min) & (u <= rf.s_max)
    x1, x2, u = x1[inside], x2[inside], u[inside]
    ux1 = ex.evaluate_array(f.v2, x1, x2, f.env)
    lap = ex.evaluate_array(ex.laplacian(f.v2), x1, x2, f.env)
    return float(np.max(np.abs(lap + rf.derivative(u) * ux1))) if len(u) else 0.0
