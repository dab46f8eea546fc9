"""Numerical checks of the structural facts about admissible flows.

Semilinear profile reconstruction, forbidden-pattern scans along traced
curves, Hausdorff proximity, foliation probes, logarithmic argument bounds
and shear detection.  Each check reports what it measured; none of them
proves anything.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize_scalar
from scipy.spatial import cKDTree

from . import expr as ex
from .argument import BranchError, oscillation, unwrap
from .constants import ConstantsReport, constants, partition_params  # noqa: F401
from .field import Box, VectorField, estimate_eta, stream_function, vorticity
from .tracer import Ball, IntegratorConfig, Trajectory, trace, trace_gradient, trace_streamline


class HypothesisError(Exception):
    """The field does not satisfy the standing assumptions for a check."""


# ---------------------------------------------------------------- semilinear profile

@dataclass(frozen=True, eq=False)
class ReconstructedF:
    s: np.ndarray
    values: np.ndarray
    interpolant: PchipInterpolator = dc_field(repr=False)

    @property
    def s_min(self) -> float:
        return float(self.s[0])

    @property
    def s_max(self) -> float:
        return float(self.s[-1])

    @property
    def range_ok(self) -> bool:
        return self.s_max - self.s_min >= 1.0

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if np.any((s < self.s_min) | (s > self.s_max)):
            raise ValueError("profile is not extrapolated outside its sampled range")
        return self.interpolant(s)

    def derivative(self, s):
        return self.interpolant.derivative()(np.asarray(s, dtype=float))


def _require_admissible(f: VectorField, box: Box | None = None):
    bounds = estimate_eta(f, box or f.box, 101)
    if bounds.stagnation:
        raise HypothesisError(
            f"stagnation: |v| drops to {bounds.eta_lo:.3g} near {bounds.argmin} on the box")
    return bounds


def reconstruct_f(f: VectorField, t_span: tuple[float, float] = (-50.0, 50.0),
                  max_step: float = 0.002) -> ReconstructedF:
    """Tabulate (u, -Lap u) along the gradient trajectory through the origin."""
    _require_admissible(f)
    traj = trace_gradient(f, (0.0, 0.0), IntegratorConfig(t_span=t_span, max_step=max_step))
    s = np.array(traj.u)
    lap = ex.evaluate_array(vorticity(f), traj.x[:, 0], traj.x[:, 1], f.env)
    if np.any(np.diff(s) <= 0):
        raise HypothesisError("u is not strictly increasing along the base gradient trajectory")
    values = -lap
    return ReconstructedF(s, values, PchipInterpolator(s, values, extrapolate=False))


@dataclass(frozen=True)
class SemilinearReport:
    max_residual: float
    n_used: int
    skipped: tuple


def verify_semilinear(f: VectorField, rf: ReconstructedF, points) -> SemilinearReport:
    """max |Lap u + f(u)| over points whose u lies inside the profile's range."""
    p = np.asarray(points, dtype=float)
    u = stream_function(f).values(p[:, 0], p[:, 1])
    inside = (u >= rf.s_min) & (u <= rf.s_max)
    skipped = tuple(tuple(map(float, q)) for q in p[~inside])
    if not inside.any():
        return SemilinearReport(0.0, 0, skipped)
    lap = ex.evaluate_array(vorticity(f), p[inside, 0], p[inside, 1], f.env)
    res = np.abs(lap + rf(u[inside]))
    return SemilinearReport(float(np.max(res)), int(inside.sum()), skipped)


# ---------------------------------------------------------------- pattern scans

@dataclass(frozen=True)
class PatternScanReport:
    trajectory_id: str
    pattern: str
    eta: float
    threshold: float
    osc_limit: float
    n_samples: int
    quadruples: int
    violations: tuple
    hypothesis_failures: int


def rigged_pattern_curve(threshold: float) -> np.ndarray:
    """Four points containing exactly one forbidden pattern at the given threshold."""
    s = 0.8 * threshold
    return np.array([(0.0, 0.0), (-s, 0.0), (s, 0.0), (s / 2, s / 2)])


def _between(p, a, b):
    """Vectorized: p strictly inside segment (a, b) up to a relative collinearity tolerance."""
    d = b - a
    w = p - a
    dd = np.einsum("ij,ij->i", d, d)
    cross = d[:, 0] * w[:, 1] - d[:, 1] * w[:, 0]
    dot = d[:, 0] * w[:, 0] + d[:, 1] * w[:, 1]
    return (np.abs(cross) <= 1e-6 * dd) & (dot > 0) & (dot < dd)


def _subsample(traj: Trajectory, cap: int) -> np.ndarray:
    if len(traj) <= cap:
        return np.array(traj.x)
    ts = np.linspace(traj.t[0], traj.t[-1], cap)
    return np.array([traj.state_at(t) for t in ts])


def _scan(points: np.ndarray, threshold: float, hypothesis) -> tuple[int, list, int]:
    n = len(points)
    quads = 0
    violations = []
    failures = 0
    for order in (1, -1):
        pts = points if order == 1 else points[::-1]
        for i in range(n - 2):
            dist = np.hypot(*(pts[i + 1:] - pts[i]).T)
            close = np.nonzero(dist < threshold)[0]
            if len(close) == 0:
                continue
            J = i + 1 + int(close[-1])
            if J < i + 2:
                continue
            k2, k3 = np.triu_indices(J - i, k=1)
            k2, k3 = k2 + i + 1, k3 + i + 1
            quads += len(k2)
            hit = _between(pts[i], pts[k2], pts[k3])
            if not hit.any():
                continue
            if not hypothesis(pts[i]):
                failures += 1
                continue
            j = int(np.nonzero(hit)[0][0])
            idx = (i, int(k2[j]), int(k3[j]), J)
            if order == -1:
                idx = tuple(n - 1 - q for q in idx)
            violations.append({"tau": idx, "point": tuple(map(float, pts[i]))})
    return quads, violations, failures


def _osc_hypothesis(f: VectorField | None, limit: float):
    if f is None:
        return lambda p: True
    cache = {}

    def check(p):
        key = (round(float(p[0]), 6), round(float(p[1]), 6))
        if key not in cache:
            try:
                cache[key] = oscillation(f, key, 1.0, 101, n_max=401).osc < limit
            except BranchError:
                cache[key] = False
        return cache[key]
    return check


def scan_pattern(f: VectorField | None, curve, eta: float, pattern: str = "oneleft",
                 cap: int = 400, trajectory_id: str = "") -> PatternScanReport:
    """Search sampled quadruples for the forbidden pattern along a curve.

    ``oneleft`` uses threshold eta^4 and small-ball limit pi/2 (gradient
    orbits); ``oneleftbis`` uses eta^2/4 and pi/4 (streamlines).  With
    ``f`` None the curve is synthetic and the small-ball hypothesis is
    taken as satisfied.
    """
    if pattern == "oneleft":
        threshold, limit = eta**4, math.pi / 2
    elif pattern == "oneleftbis":
        threshold, limit = eta**2 / 4, math.pi / 4
    else:
        raise ValueError(f"unknown pattern {pattern!r}")
    pts = _subsample(curve, cap) if isinstance(curve, Trajectory) else np.asarray(curve, float)
    quads, violations, failures = _scan(pts, threshold, _osc_hypothesis(f, limit))
    return PatternScanReport(trajectory_id, pattern, eta, threshold, limit, len(pts), quads,
                             tuple(violations), failures)


def scan_oneleft(f, traj, eta, **kw) -> PatternScanReport:
    return scan_pattern(f, traj, eta, "oneleft", **kw)


def scan_oneleftbis(f, traj, eta, **kw) -> PatternScanReport:
    return scan_pattern(f, traj, eta, "oneleftbis", **kw)


# ---------------------------------------------------------------- Hausdorff distance

@dataclass(frozen=True)
class HausdorffResult:
    distance: float
    forward: float
    backward: float
    sampling_bound: float


def _as_points(c) -> np.ndarray:
    if isinstance(c, Trajectory):
        return np.array(c.x)
    if hasattr(c, "points"):
        return np.asarray(c.points, dtype=float)
    return np.asarray(c, dtype=float)


def _window(points: np.ndarray, window: Ball | None) -> np.ndarray:
    if window is None:
        return points
    keep = np.hypot(points[:, 0] - window.center[0], points[:, 1] - window.center[1]) <= window.radius
    return points[keep]


def point_polyline_distance(points: np.ndarray, poly: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Distance from each point to a polyline (or to a single point)."""
    if len(poly) == 1:
        return np.hypot(*(points - poly[0]).T)
    a, b = poly[:-1], poly[1:]
    d = b - a
    dd = np.maximum(np.einsum("ij,ij->i", d, d), 1e-300)
    tree = cKDTree(poly)
    # only segments near the closest vertex can be nearest; check a neighbourhood
    seg_len = float(np.sqrt(dd.max()))
    out = np.empty(len(points))
    for lo in range(0, len(points), chunk):
        p = points[lo:lo + chunk]
        near, _ = tree.query(p)
        cand = tree.query_ball_point(p, near + seg_len)
        for k, (q, idx) in enumerate(zip(p, cand)):
            idx = np.asarray(idx, dtype=int)
            segs = np.unique(np.clip(np.concatenate((idx - 1, idx)), 0, len(a) - 1))
            w = q - a[segs]
            lam = np.clip(np.einsum("ij,ij->i", w, d[segs]) / dd[segs], 0.0, 1.0)
            foot = a[segs] + lam[:, None] * d[segs]
            out[lo + k] = float(np.min(np.hypot(*(q - foot).T)))
    return out


def hausdorff(c1, c2, window: Ball | None = None) -> HausdorffResult:
    """Hausdorff distance between two sampled curves, optionally inside a ball."""
    p1 = _window(_as_points(c1), window)
    p2 = _window(_as_points(c2), window)
    if len(p1) == 0 or len(p2) == 0:
        raise ValueError("empty curve")
    forward = float(np.max(point_polyline_distance(p1, p2)))
    backward = float(np.max(point_polyline_distance(p2, p1)))

    def half_step(p):
        return float(np.max(np.hypot(*np.diff(p, axis=0).T))) / 2 if len(p) > 1 else 0.0
    return HausdorffResult(max(forward, backward), forward, backward, max(half_step(p1), half_step(p2)))


# ---------------------------------------------------------------- foliation

@dataclass(frozen=True)
class FoliationRecord:
    x: tuple[float, float]
    level: float
    base_point: tuple[float, float] | None
    distance: float | None
    reason: str = ""


def _locate_level(traj: Trajectory, level: float) -> np.ndarray:
    k = int(np.searchsorted(traj.u, level))
    if k == 0:
        return np.array(traj.x[0])
    lo, hi = float(traj.t[k - 1]), float(traj.t[k])
    u = stream_function(traj.field)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        val = u.value(traj.state_at(mid)) - level
        if val == 0:
            return traj.state_at(mid)
        if val < 0:
            lo = mid
        else:
            hi = mid
    a, b = traj.state_at(lo), traj.state_at(hi)
    return a if abs(u.value(a) - level) <= abs(u.value(b) - level) else b


def _distance_to_trajectory(traj: Trajectory, x: np.ndarray) -> float:
    d = np.hypot(*(traj.x - x).T)
    k = int(np.argmin(d))
    lo = float(traj.t[max(k - 1, 0)])
    hi = float(traj.t[min(k + 1, len(traj) - 1)])
    if lo == hi:
        return float(d[k])
    res = minimize_scalar(lambda t: float(np.hypot(*(traj.state_at(t) - x))), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-12})
    # Brent's bracket carries a sqrt(eps)*|t| term; polish with Gauss-Newton along the tangent
    t, best = float(res.x), float(res.fun)
    for _ in range(4):
        p = traj.state_at(t)
        w = np.asarray(traj.field.velocity(p), dtype=float)
        ww = float(np.dot(w, w))
        if ww == 0:
            break
        t = min(max(t - float(np.dot(p - x, w)) / ww, lo), hi)
        best = min(best, float(np.hypot(*(traj.state_at(t) - x))))
    return float(min(best, d[k]))


def foliation_probe(f: VectorField, samples, t_span: tuple[float, float] = (-50.0, 50.0),
                    max_step: float = 0.05) -> list[FoliationRecord]:
    """Check that each sample lies on the streamline through its u-level point on the base trajectory."""
    _require_admissible(f)
    u = stream_function(f)
    cfg = IntegratorConfig(t_span=t_span, max_step=max_step)
    base = trace_gradient(f, (0.0, 0.0), cfg, u)
    out = []
    for x in np.asarray(samples, dtype=float):
        level = u.value(x)
        if not base.u[0] <= level <= base.u[-1]:
            out.append(FoliationRecord(tuple(map(float, x)), level, None, None,
                                       f"u-level outside [{base.u[0]!r}, {base.u[-1]!r}] reached by the base trajectory"))
            continue
        y = _locate_level(base, level)
        line = trace_streamline(f, y, cfg, u)
        out.append(FoliationRecord(tuple(map(float, x)), level, tuple(map(float, y)),
                                   _distance_to_trajectory(line, x)))
    return out


# ---------------------------------------------------------------- logarithmic argument bounds

@dataclass(frozen=True)
class PairRecord:
    x: tuple[float, float]
    y: tuple[float, float] | None
    t: float
    distance: float
    lhs: float
    bound: float
    hypothesis_ok: bool
    hypothesis_osc: float
    reason: str = ""

    @property
    def bound_holds(self) -> bool:
        return self.y is not None and self.lhs <= self.bound

    @property
    def status(self) -> str:
        if self.y is None:
            return "skipped"
        if not self.hypothesis_ok:
            return "hypothesis-failed"
        return "pass" if self.bound_holds else "fail"


def _pair_check(f: VectorField, eta: float, pairs, kind: str, constant: float, limit: float,
                cfg_max_step: float = 0.05) -> list[PairRecord]:
    records = []
    osc_cache: dict = {}
    for x, t in pairs:
        x = (float(x[0]), float(x[1]))
        t = float(t)
        key = (round(x[0], 9), round(x[1], 9))
        if key not in osc_cache:
            try:
                osc_cache[key] = oscillation(f, x, 1.0, 101, n_max=401).osc
            except BranchError:
                osc_cache[key] = math.inf
        osc = osc_cache[key]
        span = (min(t, 0.0), max(t, 0.0))
        traj = trace(f, x, kind, IntegratorConfig(t_span=span, max_step=cfg_max_step))
        if not math.isclose(traj.t[0], span[0]) or not math.isclose(traj.t[-1], span[1]):
            records.append(PairRecord(x, None, t, math.nan, math.nan, math.nan, osc < limit, osc,
                                      "trajectory left the box before reaching t"))
            continue
        theta = unwrap(traj).theta
        i0 = int(np.searchsorted(traj.t, 0.0))
        lhs = float(abs(theta[-1] - theta[i0] if t > 0 else theta[0] - theta[i0]))
        y = tuple(map(float, traj.x[-1] if t > 0 else traj.x[0]))
        dist = math.dist(x, y)
        records.append(PairRecord(x, y, t, dist, lhs, constant * math.log(3 + dist), osc < limit, osc))
    return records


def check_lemma_log(f: VectorField, eta: float, pairs: Sequence) -> list[PairRecord]:
    """Pairs (x, t): y is the gradient-flow point at time t from x; bound C1 ln(3 + |x - y|)."""
    return _pair_check(f, eta, pairs, "gradient", constants(eta).C1, math.pi / 2)


def check_lemma_logbis(f: VectorField, eta: float, pairs: Sequence) -> list[PairRecord]:
    """Pairs (x, t) along streamlines; bound C2 ln(3 + |x - y|)."""
    return _pair_check(f, eta, pairs, "streamline", constants(eta).C2, math.pi / 4)


# ---------------------------------------------------------------- shear detection

@dataclass(frozen=True)
class ShearVerdict:
    kind: str  # shear | non-shear | hypothesis-violated
    osc: float | None = None
    direction: tuple[float, float] | None = None
    angle: float | None = None
    profile_s: tuple = ()
    profile_V: tuple = ()
    sign: str = ""
    reason: str = ""
    notes: tuple = ()


def detect_shear(f: VectorField, box: Box | None = None, tol: float = 1e-6, n: int = 101,
                 profile_points: int = 41) -> ShearVerdict:
    box = box or f.box
    bounds = estimate_eta(f, box, n)
    if bounds.stagnation:
        return ShearVerdict("hypothesis-violated",
                            reason=f"stagnation point: |v| = {bounds.eta_lo:.3g} near "
                                   f"({bounds.argmin[0]:.6g}, {bounds.argmin[1]:.6g})")
    notes = []
    c = ((box.x1min + box.x1max) / 2, (box.x2min + box.x2max) / 2)
    half = min(box.x1max - box.x1min, box.x2max - box.x2min) / 2
    big = Box.square(2 * half, c)
    try:
        grown = estimate_eta(f, big, n)
        if grown.eta_hi > 1.5 * bounds.eta_hi:
            notes.append(f"|v| grows from {bounds.eta_hi:.6g} to {grown.eta_hi:.6g} when the box "
                         "doubles: boundedness hypothesis fails")
    except ex.ExprError:
        notes.append("field not evaluable on the enlarged box")
    result = oscillation(f, c, half, n, tol=1e-4)
    if result.osc > tol:
        return ShearVerdict("non-shear", osc=result.osc, notes=tuple(notes))
    from .argument import branch_field

    b = branch_field(f, c, half, n)
    angle = float(b.anchor + np.nanmean(b.relative)) % (2 * math.pi)
    e = (math.cos(angle), math.sin(angle))
    e_perp = (-e[1], e[0])
    s = np.linspace(-half, half, profile_points)
    x1 = c[0] + s * e_perp[0]
    x2 = c[1] + s * e_perp[1]
    v1, v2 = f.velocity_grid(x1, x2)
    V = v1 * e[0] + v2 * e[1]
    offset = c[0] * e_perp[0] + c[1] * e_perp[1]
    sign = "positive" if np.all(V > 0) else "negative" if np.all(V < 0) else "mixed"
    return ShearVerdict("shear", result.osc, e, angle, tuple(map(float, s + offset)),
                        tuple(map(float, V)), sign, notes=tuple(notes))
