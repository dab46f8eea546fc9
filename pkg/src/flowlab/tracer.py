"""Streamline and gradient-flow tracing with an adaptive Dormand-Prince 4(5) pair.

Every trace starts at t = 0 from the seed and runs forward and/or backward
to the ends of ``t_span``.  Stops (leaving a region, reaching a u-level)
are located by bisection on the continuous extension of the accepted step,
so event points carry the integrator's accuracy rather than a step's.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence, Union

import numpy as np

from .field import TOL_STAGNATION, Box, StreamFunction, VectorField, stream_function

KINDS = ("streamline", "gradient", "streamline_arclength", "gradient_arclength")

# Dormand-Prince coefficients
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_E = tuple(b5 - b4 for b5, b4 in zip(_A[6] + (0.0,), _B4))


class TraceError(Exception):
    pass


class NoExitError(TraceError):
    pass


class LevelNotReachedError(TraceError):
    def __init__(self, level: float, reached: tuple[float, float]):
        super().__init__(f"u-level {level!r} not reached; u covered [{reached[0]!r}, {reached[1]!r}]")
        self.level = level
        self.reached = reached


class _Stagnation(Exception):
    pass


@dataclass(frozen=True)
class Ball:
    center: tuple[float, float]
    radius: float

    def signed_distance(self, x) -> float:
        return math.hypot(x[0] - self.center[0], x[1] - self.center[1]) - self.radius


@dataclass(frozen=True)
class LevelStop:
    value: float


@dataclass(frozen=True)
class ArcLengthStop:
    length: float


Region = Union[Ball, Box]
Stop = Union[Ball, Box, LevelStop, ArcLengthStop, None]


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    max_step: float = math.inf
    t_span: tuple[float, float] = (0.0, 10.0)
    stop: Stop = None
    max_steps: int = 200_000

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        t0, t1 = self.t_span
        if not (math.isfinite(t0) and math.isfinite(t1)) or not t0 <= 0.0 <= t1 or t0 == t1:
            raise ValueError("t_span must be finite and contain 0")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")


def velocity_function(f: VectorField, kind: str) -> Callable[[float, float], tuple[float, float]]:
    """Right-hand side dx/dt for the requested kind of curve."""
    vel = f.velocity_xy
    if kind == "streamline":
        return vel
    if kind == "gradient":
        def rhs(x1, x2):
            a, b = vel(x1, x2)
            return b, -a
        return rhs
    if kind in ("streamline_arclength", "gradient_arclength"):
        grad = kind == "gradient_arclength"

        def rhs(x1, x2):
            a, b = vel(x1, x2)
            n = math.hypot(a, b)
            if n < TOL_STAGNATION:
                raise _Stagnation()
            return (b / n, -a / n) if grad else (a / n, b / n)
        return rhs
    raise ValueError(f"unknown trajectory kind {kind!r}")


def _dp_step(rhs, x1, x2, k1, h):
    ks = [k1]
    for i in range(1, 7):
        a = _A[i]
        s1 = x1 + h * sum(c * k[0] for c, k in zip(a, ks))
        s2 = x2 + h * sum(c * k[1] for c, k in zip(a, ks))
        ks.append(rhs(s1, s2))
    e1 = h * sum(c * k[0] for c, k in zip(_E, ks))
    e2 = h * sum(c * k[1] for c, k in zip(_E, ks))
    return s1, s2, ks[6], e1, e2


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled curve with per-sample tangent dx/dt and stream-function value."""

    kind: str
    t: np.ndarray
    x: np.ndarray
    velocity: np.ndarray
    u: np.ndarray
    events: tuple = ()
    field: VectorField | None = dc_field(default=None, repr=False)

    def __post_init__(self):
        for arr in (self.t, self.x, self.velocity, self.u):
            arr.setflags(write=False)

    def __len__(self):
        return len(self.t)

    @property
    def start(self):
        return self.x[0]

    @property
    def end(self):
        return self.x[-1]

    def polyline_length(self) -> float:
        return float(np.sum(np.hypot(*np.diff(self.x, axis=0).T)))

    def _segment(self, t: float) -> int:
        if not self.t[0] <= t <= self.t[-1]:
            raise ValueError(f"t={t!r} outside trajectory span [{self.t[0]!r}, {self.t[-1]!r}]")
        return int(min(max(np.searchsorted(self.t, t, side="right") - 1, 0), len(self.t) - 2))

    def hermite_at(self, t: float) -> np.ndarray:
        """Cubic Hermite interpolation between stored samples."""
        i = self._segment(t)
        h = self.t[i + 1] - self.t[i]
        s = (t - self.t[i]) / h
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return (h00 * self.x[i] + h10 * h * self.velocity[i]
                + h01 * self.x[i + 1] + h11 * h * self.velocity[i + 1])

    def state_at(self, t: float) -> np.ndarray:
        """Position at parameter t.

        With a field attached this re-takes one integrator step from the
        preceding sample, which is as accurate as the accepted step itself;
        otherwise it falls back to Hermite interpolation.
        """
        if self.field is None or len(self.t) < 2:
            return self.hermite_at(t)
        i = self._segment(t)
        h = t - self.t[i]
        if h == 0.0:
            return np.array(self.x[i])
        rhs = velocity_function(self.field, self.kind)
        y1, y2, *_ = _dp_step(rhs, self.x[i, 0], self.x[i, 1], tuple(self.velocity[i]), h)
        return np.array([y1, y2])

    @classmethod
    def from_points(cls, points, t=None, tangents=None, kind: str = "polyline") -> "Trajectory":
        """Wrap a bare polyline; tangents default to centered differences."""
        pts = np.asarray(points, dtype=float)
        n = len(pts)
        t = np.arange(n, dtype=float) if t is None else np.asarray(t, dtype=float)
        if tangents is None:
            tangents = np.gradient(pts, t, axis=0) if n > 1 else np.zeros_like(pts)
        return cls(kind, t.copy(), pts.copy(), np.asarray(tangents, float).copy(), np.full(n, np.nan))


class _Half:
    """One direction of integration, collecting accepted samples."""

    def __init__(self, rhs, x0, k0, u_fn, sign):
        self.rhs = rhs
        self.t = [0.0]
        self.x = [tuple(x0)]
        self.k = [k0]
        self.u_fn = u_fn
        self.sign = sign
        self.events: list[tuple[str, float]] = []


def _norm(e1, e2, x, y, cfg):
    s1 = cfg.abs_tol + cfg.rel_tol * max(abs(x[0]), abs(y[0]))
    s2 = cfg.abs_tol + cfg.rel_tol * max(abs(x[1]), abs(y[1]))
    return math.sqrt(((e1 / s1) ** 2 + (e2 / s2) ** 2) / 2)


def _bisect(rhs, x, k, h, g, g_start_sign):
    """Root of g along a single step from x, parameterized by partial step length."""
    lo, hi = 0.0, h
    p_hi = _dp_step(rhs, x[0], x[1], k, hi)
    p_lo = x
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        p = _dp_step(rhs, x[0], x[1], k, mid)
        val = g((p[0], p[1]))
        if val == 0.0:
            return mid, (p[0], p[1])
        if math.copysign(1.0, val) == g_start_sign:
            lo, p_lo = mid, (p[0], p[1])
        else:
            hi, p_hi = mid, p
    if abs(g(p_lo)) < abs(g((p_hi[0], p_hi[1]))) and lo > 0:
        return lo, p_lo
    return hi, (p_hi[0], p_hi[1])


def _integrate(half: _Half, t_end: float, cfg: IntegratorConfig, box: Box, gs):
    """Advance ``half`` towards t_end; ``gs`` are (name, g) with g < 0 meaning 'keep going'."""
    rhs = half.rhs
    t = 0.0
    x = half.x[0]
    k = half.k[0]
    if math.hypot(*k) < TOL_STAGNATION:
        half.events.append(("stagnation", 0.0))
        return
    sign = half.sign
    d0 = math.hypot(x[0], x[1]) + 1.0
    h = min(cfg.max_step, 0.01 * d0 / max(math.hypot(*k), 1e-12), abs(t_end)) * sign
    starts = [(name, g, math.copysign(1.0, g(x))) for name, g in gs]
    steps = 0
    while True:
        remaining = t_end - t
        if abs(remaining) <= 1e-14 * max(1.0, abs(t_end)):
            half.events.append(("t_end", t))
            return
        if abs(h) > abs(remaining):
            h = remaining
        if abs(h) < 1e-14 * max(1.0, abs(t)):
            half.events.append(("step_underflow", t))
            return
        if steps >= cfg.max_steps:
            half.events.append(("max_steps", t))
            return
        try:
            y1, y2, k_new, e1, e2 = _dp_step(rhs, x[0], x[1], k, h)
        except _Stagnation:
            h *= 0.25
            steps += 1
            continue
        steps += 1
        err = _norm(e1, e2, x, (y1, y2), cfg)
        if not math.isfinite(err) or err > 1.0:
            factor = 0.2 if not math.isfinite(err) else max(0.2, 0.9 * err ** -0.2)
            h *= factor
            continue
        y = (y1, y2)
        hits = []
        for name, g, s0 in starts:
            val = g(y)
            if val == 0.0 or math.copysign(1.0, val) != s0:
                tau, p = _bisect(rhs, x, k, h, g, s0)
                hits.append((abs(tau), tau, p, name))
        if hits:
            # several events inside one step: the earliest one ends the trace
            _, tau, p, name = min(hits, key=lambda hit: hit[0])
            if tau != 0.0:
                half.t.append(t + tau)
                half.x.append(p)
                half.k.append(rhs(*p))
                half.events.append((name, t + tau))
            else:
                half.events.append((name, t))
            return
        t = t + h
        x, k = y, k_new
        half.t.append(t)
        half.x.append(x)
        half.k.append(k)
        if math.hypot(*k) < TOL_STAGNATION:
            half.events.append(("stagnation", t))
            return
        factor = 5.0 if err == 0.0 else min(5.0, 0.9 * err ** -0.2)
        h = math.copysign(min(abs(h) * factor, cfg.max_step), h)


def _stop_functions(f: VectorField, cfg: IntegratorConfig, u: StreamFunction, kind: str, x0):
    gs = [("box_exit", f.box.signed_distance)]
    stop = cfg.stop
    if isinstance(stop, Ball):
        gs.append(("ball_exit", stop.signed_distance))
    elif isinstance(stop, Box):
        gs.append(("region_exit", stop.signed_distance))
    elif isinstance(stop, LevelStop):
        gs.append(("level", lambda p: u.value(p) - stop.value))
    return gs


def trace(f: VectorField, x0, kind: str = "streamline", cfg: IntegratorConfig | None = None,
          u: StreamFunction | None = None) -> Trajectory:
    cfg = cfg or IntegratorConfig()
    if kind not in KINDS:
        raise ValueError(f"unknown trajectory kind {kind!r}")
    x0 = (float(x0[0]), float(x0[1]))
    if not f.box.contains(x0):
        raise TraceError(f"seed {x0} outside the domain box")
    u = u or stream_function(f)
    rhs = velocity_function(f, kind)
    t0, t1 = cfg.t_span
    if isinstance(cfg.stop, ArcLengthStop) and kind.endswith("arclength"):
        t0, t1 = max(t0, -cfg.stop.length), min(t1, cfg.stop.length)
    try:
        k0 = rhs(*x0)
    except _Stagnation:
        k0 = (0.0, 0.0)
    halves = []
    for sign, t_end in ((-1.0, t0), (1.0, t1)):
        if t_end == 0.0:
            halves.append(None)
            continue
        half = _Half(rhs, x0, k0, u, sign)
        gs = _stop_functions(f, cfg, u, kind, x0)
        if isinstance(cfg.stop, ArcLengthStop) and not kind.endswith("arclength"):
            gs.append(("arclength", _arclength_tracker(half, cfg.stop.length)))
        _integrate(half, t_end, cfg, f.box, gs)
        halves.append(half)
    back, fwd = halves
    ts, xs, ks, events = [], [], [], []
    if back is not None:
        ts += back.t[:0:-1]
        xs += back.x[:0:-1]
        ks += back.k[:0:-1]
        events += back.events
    ts.append(0.0)
    xs.append(x0)
    ks.append(k0)
    if fwd is not None:
        ts += fwd.t[1:]
        xs += fwd.x[1:]
        ks += fwd.k[1:]
        events += fwd.events
    x_arr = np.array(xs, dtype=float)
    if u.mode == "symbolic":
        u_arr = np.asarray(u.values(x_arr[:, 0], x_arr[:, 1]), dtype=float)
    else:
        u_arr = np.array([u.value(p) for p in x_arr])
    return Trajectory(kind, np.array(ts), x_arr, np.array(ks, dtype=float), u_arr,
                      tuple(events), f)


def _arclength_tracker(half: _Half, length: float):
    state = {"n": 1, "total": 0.0}

    def g(p):
        xs = half.x
        while state["n"] < len(xs):
            state["total"] += math.dist(xs[state["n"] - 1], xs[state["n"]])
            state["n"] += 1
        return state["total"] + math.dist(xs[-1], p) - length
    return g


def trace_streamline(f, x0, cfg=None, u=None) -> Trajectory:
    return trace(f, x0, "streamline", cfg, u)


def trace_gradient(f, x0, cfg=None, u=None) -> Trajectory:
    return trace(f, x0, "gradient", cfg, u)


def trace_arclength(f, x0, kind: str = "gradient", cfg=None, u=None) -> Trajectory:
    """Unit-speed variant; ``kind`` is 'streamline' or 'gradient'."""
    if not kind.endswith("_arclength"):
        kind = kind + "_arclength"
    if f.speed(x0) < TOL_STAGNATION:
        raise TraceError("zero velocity at the seed")
    return trace(f, x0, kind, cfg, u)


def level_hit(f: VectorField, sigma_start, level: float, cfg: IntegratorConfig | None = None,
              u: StreamFunction | None = None) -> np.ndarray:
    """Point on the gradient trajectory through ``sigma_start`` where u equals ``level``."""
    cfg = cfg or IntegratorConfig(t_span=(-50.0, 50.0))
    u = u or stream_function(f)
    u0 = u.value(sigma_start)
    if u0 == level:
        return np.array(sigma_start, dtype=float)
    reach = max(abs(cfg.t_span[0]), abs(cfg.t_span[1]))
    span = (0.0, reach) if level > u0 else (-reach, 0.0)
    run = IntegratorConfig(cfg.rel_tol, cfg.abs_tol, cfg.max_step, span, LevelStop(level),
                           cfg.max_steps)
    traj = trace(f, sigma_start, "gradient", run, u)
    if not any(name == "level" for name, _ in traj.events):
        raise LevelNotReachedError(level, (float(traj.u.min()), float(traj.u.max())))
    return np.array(traj.x[-1] if level > u0 else traj.x[0])


def first_exit(traj: Trajectory, region: Region) -> tuple[float, np.ndarray]:
    """First crossing of the region boundary, in sample order."""
    g = region.signed_distance
    vals = np.array([g(p) for p in traj.x])
    if vals[0] > 0:
        raise TraceError("trajectory starts outside the region")
    outside = np.nonzero(vals > 0)[0]
    if len(outside) == 0:
        raise NoExitError("trajectory never leaves the region")
    j = int(outside[0])
    lo, hi = float(traj.t[j - 1]), float(traj.t[j])
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if g(traj.state_at(mid)) > 0:
            hi = mid
        else:
            lo = mid
    p_lo, p_hi = traj.state_at(lo), traj.state_at(hi)
    if abs(g(p_lo)) <= abs(g(p_hi)):
        return lo, p_lo
    return hi, p_hi


def exit_times(traj: Trajectory, radii: Sequence[float], center=(0.0, 0.0)) -> list[float | None]:
    """Forward first-exit times from balls of increasing radius (None if never)."""
    forward = traj.t >= 0
    sub = Trajectory(traj.kind, traj.t[forward].copy(), traj.x[forward].copy(),
                     traj.velocity[forward].copy(), traj.u[forward].copy(), traj.events, traj.field)
    out = []
    for r in radii:
        try:
            out.append(first_exit(sub, Ball(tuple(center), float(r)))[0])
        except NoExitError:
            out.append(None)
    return out
