"""Excursions of a planar curve off its chord line, and the arc census.

A curve restricted to [a, b] meets the line through its endpoints in a
closed set E.  Its complement in [a, b] is a union of open intervals
(arcs), each of which returns to the line at both ends.  Arcs are sorted
into five classes by where their two line points fall relative to the
chord, measured by the chord coordinate xi (0 at the start, 1 at the end).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from fractions import Fraction

import numpy as np

from .argument import polyline_directions, unwrap_tangents
from .tracer import Trajectory

CLASSES = ("middle", "left", "right", "double", "exterior")
SNAP = 1e-9


class ArcError(Exception):
    pass


class SelfIntersectionError(ArcError):
    pass


@dataclass(frozen=True, eq=False)
class Curve:
    """Polyline samples with parameters and optional tangents."""

    t: np.ndarray
    points: np.ndarray
    tangents: np.ndarray | None = None

    def __post_init__(self):
        if len(self.t) != len(self.points) or len(self.t) < 2:
            raise ArcError("a curve needs at least two samples with matching parameters")
        if np.any(np.diff(self.t) <= 0):
            raise ArcError("curve parameters must be strictly increasing")
        if np.any(np.all(np.diff(self.points, axis=0) == 0, axis=1)):
            raise ArcError("consecutive curve points coincide")

    @classmethod
    def from_points(cls, points, t=None) -> "Curve":
        pts = np.asarray(points, dtype=float)
        t = np.arange(len(pts), dtype=float) if t is None else np.asarray(t, dtype=float)
        return cls(t, pts)

    @classmethod
    def from_trajectory(cls, traj: Trajectory) -> "Curve":
        return cls(np.array(traj.t), np.array(traj.x), np.array(traj.velocity))

    def restrict(self, a: float, b: float) -> "Curve":
        """Sub-curve on [a, b] with linearly interpolated end samples."""
        if not a < b:
            raise ArcError("need a < b")
        if a < self.t[0] or b > self.t[-1]:
            raise ArcError(f"[{a}, {b}] is outside the curve's span")
        inner = (self.t > a) & (self.t < b)
        t = np.concatenate(([a], self.t[inner], [b]))
        pts = np.column_stack([np.interp(t, self.t, self.points[:, k]) for k in (0, 1)])
        tang = None
        if self.tangents is not None:
            tang = np.column_stack([np.interp(t, self.t, self.tangents[:, k]) for k in (0, 1)])
        return Curve(t, pts, tang)

    def length(self) -> float:
        return float(np.sum(np.hypot(*np.diff(self.points, axis=0).T)))


@dataclass(frozen=True)
class ArcInterval:
    k: int
    t_start: float
    t_end: float
    p_start: tuple[float, float]
    p_end: tuple[float, float]
    xi_start: float
    xi_end: float
    cls: str = ""


@dataclass(frozen=True)
class ArcCensus:
    N_l: int
    N_r: int
    N_d: int
    N_middle: int
    N_exterior: int
    theta_delta: float
    chord: float
    length: float
    intervals: tuple = dc_field(default=(), repr=False)

    @property
    def bound_value(self) -> float:
        return 16 * math.pi * (self.N_l + self.N_r + self.N_d) + 4 * math.pi

    @property
    def bound_ok(self) -> bool:
        return self.theta_delta <= self.bound_value

    @property
    def double_bound_ok(self) -> bool:
        return self.N_d <= self.length / self.chord + 1

    def counts(self) -> tuple[int, int, int, int, int]:
        return (self.N_l, self.N_r, self.N_d, self.N_middle, self.N_exterior)


def _chord_frame(points: np.ndarray):
    A, B = points[0], points[-1]
    d = B - A
    L = float(np.hypot(*d))
    if L == 0:
        raise ArcError("degenerate chord: curve returns to its starting point")
    return A, d, L


def _snap(value: float, target: float, tol: float) -> float:
    return target if abs(value - target) <= tol else value


def classify_xi(xi_a: float, xi_b: float) -> str:
    """Class of an arc from the chord coordinates of its two line points.

    The chord runs from 0 to 1.  A degenerate arc returning to an endpoint
    of the chord (both coordinates 0, or both 1) is classed as middle.
    """
    lo, hi = min(xi_a, xi_b), max(xi_a, xi_b)
    if 0 <= lo and hi <= 1:
        return "middle"
    if hi <= 0 or lo >= 1:
        return "exterior"
    if lo < 0 and hi > 1:
        return "double"
    if lo < 0:
        return "left"
    return "right"


def _line_hits(c: Curve):
    """Signed distances (snapped) and the ordered points where the polyline meets the chord line."""
    P = c.points
    A, d, L = _chord_frame(P)
    rel = P - A
    s = (d[0] * rel[:, 1] - d[1] * rel[:, 0]) / L
    s[np.abs(s) <= SNAP * L] = 0.0
    s[0] = s[-1] = 0.0
    hits = []  # (parameter, point, vertex index or -1)
    for i in range(len(P)):
        if s[i] == 0.0:
            hits.append((c.t[i], P[i], i))
        if i + 1 < len(P) and s[i] * s[i + 1] < 0:
            lam = s[i] / (s[i] - s[i + 1])
            point = P[i] + lam * (P[i + 1] - P[i])
            tt = c.t[i] + lam * (c.t[i + 1] - c.t[i])
            hits.append((tt, point, -1))
    return s, hits, A, d, L


def crossing_intervals(c: Curve, a: float | None = None, b: float | None = None) -> list[ArcInterval]:
    """Maximal open parameter intervals on which the curve is off the chord line."""
    if a is not None or b is not None:
        c = c.restrict(c.t[0] if a is None else a, c.t[-1] if b is None else b)
    s, hits, A, d, L = _line_hits(c)
    out = []
    for (t0, p0, _), (t1, p1, _) in zip(hits, hits[1:]):
        between = (c.t > t0) & (c.t < t1)
        if not np.any(between):
            continue
        xi0 = _snap(_snap(float(np.dot(p0 - A, d)) / (L * L), 0.0, SNAP), 1.0, SNAP)
        xi1 = _snap(_snap(float(np.dot(p1 - A, d)) / (L * L), 0.0, SNAP), 1.0, SNAP)
        k = len(out)
        out.append(ArcInterval(k, float(t0), float(t1), tuple(map(float, p0)), tuple(map(float, p1)),
                               xi0, xi1, classify_xi(xi0, xi1)))
    return out


def classify(interval: ArcInterval, *_ignored) -> str:
    return classify_xi(interval.xi_start, interval.xi_end)


def theta_delta(c: Curve) -> float:
    if c.tangents is not None:
        trace = unwrap_tangents(c.t, c.tangents)
    else:
        trace = unwrap_tangents(c.t[:-1], polyline_directions(c.points))
    return abs(trace.delta)


def _orient(p, q, r):
    return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])


def _within(pt, p, q):
    """pt inside the bounding box of segment pq (all broadcast)."""
    return ((np.minimum(p[..., 0], q[..., 0]) <= pt[..., 0]) & (pt[..., 0] <= np.maximum(p[..., 0], q[..., 0]))
            & (np.minimum(p[..., 1], q[..., 1]) <= pt[..., 1]) & (pt[..., 1] <= np.maximum(p[..., 1], q[..., 1])))


def self_intersections(points, limit: int = 1) -> list[tuple[int, int]]:
    """Pairs of segments that touch or cross; adjacent segments count only if they fold back."""
    P = np.asarray(points, dtype=float)
    a, b = P[:-1], P[1:]
    m = len(a)
    found = []
    for i in range(m - 1):
        p, q = a[i], b[i]
        # the next segment shares q: only a fold back onto pq is a defect
        s_next = b[i + 1]
        if _orient(p, q, s_next) == 0 and float(np.dot(p - q, s_next - q)) > 0:
            found.append((i, i + 1))
            if len(found) >= limit:
                return found
        j = np.arange(i + 2, m)
        if len(j) == 0:
            continue
        r, s = a[j], b[j]
        o1, o2 = _orient(p, q, r), _orient(p, q, s)
        o3, o4 = _orient(r, s, p), _orient(r, s, q)
        hit = (o1 * o2 < 0) & (o3 * o4 < 0)
        hit |= (o1 == 0) & _within(r, p, q)
        hit |= (o2 == 0) & _within(s, p, q)
        hit |= (o3 == 0) & _within(p, r, s)
        hit |= (o4 == 0) & _within(q, r, s)
        for k in np.nonzero(hit)[0]:
            found.append((i, int(j[k])))
            if len(found) >= limit:
                return found
    return found


def is_simple(points) -> bool:
    return not self_intersections(points)


def census(c: Curve, a: float | None = None, b: float | None = None, check_simple: bool = True) -> ArcCensus:
    sub = c.restrict(c.t[0] if a is None else a, c.t[-1] if b is None else b) \
        if (a is not None or b is not None) else c
    if check_simple and not is_simple(sub.points):
        raise SelfIntersectionError("curve is not embedded on [a, b]")
    intervals = crossing_intervals(sub)
    counts = {k: 0 for k in CLASSES}
    for iv in intervals:
        counts[iv.cls] += 1
    _, _, L = _chord_frame(sub.points)
    return ArcCensus(counts["left"], counts["right"], counts["double"], counts["middle"],
                     counts["exterior"], theta_delta(sub), L, sub.length(), tuple(intervals))


def is_nonintersecting(c: Curve, a: float | None = None, b: float | None = None) -> bool:
    """True when the curve misses the open chord, or misses the line outside the chord."""
    sub = c.restrict(c.t[0] if a is None else a, c.t[-1] if b is None else b) \
        if (a is not None or b is not None) else c
    s, hits, A, d, L = _line_hits(sub)
    xis = []
    for tt, p, _ in hits:
        xi = _snap(_snap(float(np.dot(p - A, d)) / (L * L), 0.0, SNAP), 1.0, SNAP)
        xis.append(xi)
    # whole segments lying on the line cover everything between their ends
    for i in range(len(s) - 1):
        if s[i] == 0.0 and s[i + 1] == 0.0:
            x0 = float(np.dot(sub.points[i] - A, d)) / (L * L)
            x1 = float(np.dot(sub.points[i + 1] - A, d)) / (L * L)
            lo, hi = min(x0, x1), max(x0, x1)
            if lo < 1 and hi > 0:
                xis.append(min(max((lo + hi) / 2, lo), hi) if hi - lo > 0 else lo)
                if lo < 0 < hi or lo < 1 < hi:
                    xis.append(0.5)
            if lo < 0 or hi > 1:
                xis.append(-1.0 if lo < 0 else 2.0)
    misses_open_chord = not any(0.0 < x < 1.0 for x in xis)
    misses_outside = not any(x < 0.0 or x > 1.0 for x in xis)
    return misses_open_chord or misses_outside


# ---------------------------------------------------------------- exact oracle

def brute_census(c: Curve, a: float | None = None, b: float | None = None) -> ArcCensus:
    """Same counts as :func:`census`, from exact rational arithmetic on the vertices.

    Every segment is intersected with the chord line exactly; the sorted
    hit parameters split [a, b] and each gap is tested at its midpoint.
    """
    sub = c.restrict(c.t[0] if a is None else a, c.t[-1] if b is None else b) \
        if (a is not None or b is not None) else c
    P = [(Fraction(float(x)), Fraction(float(y))) for x, y in sub.points]
    n = len(P)
    A, B = P[0], P[-1]
    dx, dy = B[0] - A[0], B[1] - A[1]
    LL = dx * dx + dy * dy
    if LL == 0:
        raise ArcError("degenerate chord")

    def side(p):
        return dx * (p[1] - A[1]) - dy * (p[0] - A[0])

    def point_at(u):
        i = min(int(u), n - 2)
        lam = u - i
        p, q = P[i], P[i + 1]
        return (p[0] + lam * (q[0] - p[0]), p[1] + lam * (q[1] - p[1]))

    hits = set()
    for i in range(n - 1):
        s0, s1 = side(P[i]), side(P[i + 1])
        if s0 == 0:
            hits.add(Fraction(i))
        if s1 == 0:
            hits.add(Fraction(i + 1))
        if s0 * s1 < 0:
            hits.add(i + s0 / (s0 - s1))
    hits = sorted(hits)
    counts = {k: 0 for k in CLASSES}
    for u0, u1 in zip(hits, hits[1:]):
        if side(point_at((u0 + u1) / 2)) == 0:
            continue
        xi = []
        for u in (u0, u1):
            p = point_at(u)
            xi.append(((p[0] - A[0]) * dx + (p[1] - A[1]) * dy) / LL)
        counts[classify_xi(xi[0], xi[1])] += 1
    L = math.sqrt(float(LL))
    return ArcCensus(counts["left"], counts["right"], counts["double"], counts["middle"],
                     counts["exterior"], theta_delta(sub), L, sub.length())


# ---------------------------------------------------------------- fixtures

def random_simple_polyline(rng: np.random.Generator, n: int, family: str | None = None) -> np.ndarray:
    """A random embedded polyline with n vertices (rejection-checked)."""
    families = ("monotone", "spiral", "zigzag")
    for _ in range(100):
        fam = family or families[int(rng.integers(len(families)))]
        if fam == "monotone":
            x = np.cumsum(rng.uniform(0.05, 1.0, n))
            y = np.cumsum(rng.normal(0.0, 1.0, n))
            pts = np.column_stack((x, y))
        elif fam == "spiral":
            turns = rng.uniform(0.5, 4.0)
            theta = np.sort(rng.uniform(0.0, 2 * math.pi * turns, n))
            theta[0] = 0.0
            r = 1.0 + theta * rng.uniform(0.2, 1.0) + np.cumsum(rng.uniform(0.0, 0.02, n))
            pts = np.column_stack((r * np.cos(theta), r * np.sin(theta)))
        else:
            x = np.cumsum(rng.uniform(0.01, 0.2, n))
            y = rng.uniform(-1.0, 1.0, n) * rng.uniform(0.5, 3.0)
            pts = np.column_stack((x, y))
        angle = rng.uniform(0, 2 * math.pi)
        rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
        pts = pts @ rot.T + rng.normal(0, 1, 2)
        if np.all(np.any(np.diff(pts, axis=0) != 0, axis=1)) and is_simple(pts):
            return pts
    raise ArcError("could not generate a simple polyline")


def double_spiral(inner_a: float, inner_b: float, outer: float, pitch: float = 1.0,
                  samples_per_turn: int = 720) -> np.ndarray:
    """Two interleaved Archimedean arms joined on the outside.

    The curve starts on the first arm at angle ``inner_a``, winds outward to
    angle ``outer``, crosses over to the second (point-reflected) arm and
    winds back in to angle ``inner_b``.  Both inner ends sit near the
    center, so the chord between them is short and loops enclose it.
    """
    c = pitch / (2 * math.pi)

    def arm(t0, t1, flip):
        m = max(2, int(abs(t1 - t0) / (2 * math.pi) * samples_per_turn))
        th = np.linspace(t0, t1, m)
        r = c * th
        pts = np.column_stack((r * np.cos(th), r * np.sin(th)))
        return -pts if flip else pts

    out_arm = arm(inner_a, outer, False)
    in_arm = arm(outer, inner_b, True)
    # join the outer ends around the outside of both arms
    r_out = c * outer
    r_join = r_out + pitch / 4
    m = max(2, samples_per_turn // 2)
    sweep = np.linspace(outer, outer + math.pi, m)
    join = np.column_stack((r_join * np.cos(sweep), r_join * np.sin(sweep)))
    return np.vstack((out_arm, join, in_arm))


def spiral_fixture() -> np.ndarray:
    """Embedded spiral whose chord is enclosed by exactly three double arcs."""
    return double_spiral(*SPIRAL_FIXTURE_ANGLES)


SPIRAL_FIXTURE_ANGLES = (0.6 * math.pi, 0.5 * math.pi, 2.7 * math.pi)
