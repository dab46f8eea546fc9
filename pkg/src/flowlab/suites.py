"""Verification suites producing pass/fail records for a field.

Each suite is a pure function of the field and a SuiteConfig and returns a
list of records (plain dicts).  Randomness comes from a generator seeded by
(seed, suite name), so suites can run in any order or in parallel.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .argument import (BranchError, check_log_growth, div_form_residual, equx_residual,
                       observed_orders)
from .constants import c_eta_ratio, constants, h1, h2, partition_params
from .field import (Box, FieldError, VectorField, estimate_eta, euler_residual, stream_function)
from .lemma_lab import (HypothesisError, check_lemma_log, check_lemma_logbis, detect_shear,
                        foliation_probe, reconstruct_f, rigged_pattern_curve, scan_pattern,
                        verify_semilinear)
from .tracer import IntegratorConfig, TraceError, trace

SUITES = ("elliptic", "patterns", "foliation", "constants", "log-growth")
STATUSES = ("pass", "fail", "hypothesis-failed", "skipped", "error")


@dataclass(frozen=True)
class SuiteConfig:
    eta: float | None = None
    seed: int = 0
    radii: tuple = (2.0, 4.0, 8.0, 16.0)
    n_points: int = 1000
    n_orbits: int = 50
    n_samples: int = 100
    n_pairs: int = 50


def record(name: str, anchor: str, inputs: dict, measured, bound, passed: bool,
           status: str | None = None, note: str = "") -> dict:
    status = status or ("pass" if passed else "fail")
    if status not in STATUSES:
        raise ValueError(f"unknown status {status!r}")
    out = {"name": name, "anchor": anchor, "inputs": inputs, "measured": measured,
           "bound": bound, "pass": bool(passed), "status": status}
    if note:
        out["note"] = note
    return out


def error_record(name: str, anchor: str, message: str) -> dict:
    return record(name, anchor, {}, None, None, False, "error", message)


def rng_for(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(label.encode())])


def _uniform_points(rng, box: Box, n: int, shrink: float = 1.0) -> np.ndarray:
    cx, cy = (box.x1min + box.x1max) / 2, (box.x2min + box.x2max) / 2
    hx, hy = shrink * (box.x1max - box.x1min) / 2, shrink * (box.x2max - box.x2min) / 2
    return np.column_stack((rng.uniform(cx - hx, cx + hx, n), rng.uniform(cy - hy, cy + hy, n)))


def _suite_eta(f: VectorField, cfg: SuiteConfig) -> tuple[float, str]:
    if cfg.eta is not None:
        return float(cfg.eta), "given"
    bounds = estimate_eta(f, f.box, 201)
    if bounds.stagnation:
        raise HypothesisError(f"stagnation near {bounds.argmin}: |v| = {bounds.eta_lo!r}")
    return bounds.eta, "estimated on box"


# ---------------------------------------------------------------- field-level checks

def field_checks(f: VectorField, seed: int = 0, n_points: int = 100, n_quadrature: int = 100) -> list[dict]:
    """Euler residual and stream-function consistency."""
    out = []
    grid_box = Box(-2.0, 2.0, -2.0, 2.0)
    try:
        res = euler_residual(f, None, grid_box, 41)
        out.append(record("euler-residual", "steady-euler", {"grid": 41, "box": grid_box.as_list()},
                          res, 1e-10, res <= 1e-10))
    except FieldError as exc:
        out.append(record("euler-residual", "steady-euler", {}, None, None, False, "skipped", str(exc)))
    rng = rng_for(seed, "stream")
    pts = _uniform_points(rng, f.box, n_points)
    u = stream_function(f)
    if u.mode == "symbolic":
        grad = np.array([u.gradient(p) for p in pts])
        v1, v2 = f.velocity_grid(pts[:, 0], pts[:, 1])
        err = float(np.max(np.abs(np.column_stack((-grad[:, 1], grad[:, 0])) - np.column_stack((v1, v2)))))
        out.append(record("stream-perp-gradient", "stream-function", {"points": n_points},
                          err, 1e-10, err <= 1e-10))
        q = pts[:n_quadrature]
        diff = float(max(abs(u.quadrature(p) - u.value(p)) for p in q))
        out.append(record("stream-quadrature", "stream-function", {"points": len(q)},
                          diff, 1e-8, diff <= 1e-8))
    return out


def shear_verdict_record(f: VectorField, expected: str | None = None) -> dict:
    v = detect_shear(f)
    measured = {"verdict": v.kind, "osc": v.osc, "direction": v.direction, "angle": v.angle,
                "sign": v.sign, "reason": v.reason, "notes": list(v.notes)}
    if expected is None:
        return record("shear-verdict", "shear-rigidity", {"tol": 1e-6}, measured, None, True,
                      "pass")
    return record("shear-verdict", "shear-rigidity", {"expected": expected}, measured, None,
                  v.kind == expected)


# ---------------------------------------------------------------- suites

def suite_elliptic(f: VectorField, cfg: SuiteConfig) -> list[dict]:
    try:
        rf = reconstruct_f(f)
    except HypothesisError as exc:
        return [error_record("semilinear-residual", "semilinear-profile", str(exc))]
    rng = rng_for(cfg.seed, "elliptic")
    pts = _uniform_points(rng, f.box, cfg.n_points)
    rep = verify_semilinear(f, rf, pts)
    inputs = {"points": cfg.n_points, "used": rep.n_used, "s_range": [rf.s_min, rf.s_max]}
    out = [record("semilinear-residual", "semilinear-profile", inputs, rep.max_residual, 1e-5,
                  rep.max_residual <= 1e-5, None if rep.n_used else "skipped")]
    if not rf.range_ok:
        out[-1]["note"] = "profile covers an s-range shorter than 1"
    eq = equx_residual(f, rf, pts)
    out.append(record("derivative-equation-residual", "semilinear-profile",
                      {"points": cfg.n_points}, eq, 1e-3, eq <= 1e-3))
    centers = _uniform_points(rng, f.box, 50, shrink=0.5)
    hs = (0.02, 0.01, 0.005)
    try:
        residuals = [div_form_residual(f, centers, h) for h in hs]
    except ex.ExprError as exc:
        out.append(error_record("div-form-order", "argument-div-form", str(exc)))
        return out
    orders = observed_orders(residuals) if min(residuals) > 0 else []
    rounding = residuals[-1] <= 1e-8 * max(1.0, estimate_eta(f, f.box, 101).eta_hi ** 2)
    ok = rounding or all(1.8 <= o <= 2.2 for o in orders) and len(orders) == 2
    out.append(record("div-form-order", "argument-div-form", {"h": list(hs), "points": 50},
                      {"residuals": residuals, "orders": orders}, [1.8, 2.2], ok,
                      note="residual at rounding level" if rounding else ""))
    return out


def suite_patterns(f: VectorField, cfg: SuiteConfig) -> list[dict]:
    out = []
    for pattern in ("oneleft", "oneleftbis"):
        r = scan_pattern(None, rigged_pattern_curve(1.0 if pattern == "oneleft" else 0.25), 1.0, pattern)
        out.append(record(f"rigged-curve-{pattern}", "forbidden-pattern", {"eta": 1.0},
                          len(r.violations), 1, len(r.violations) == 1))
    try:
        eta, source = _suite_eta(f, cfg)
    except HypothesisError as exc:
        out.append(error_record("pattern-scan", "forbidden-pattern", str(exc)))
        return out
    rng = rng_for(cfg.seed, "patterns")
    for kind, pattern in (("gradient", "oneleft"), ("streamline", "oneleftbis")):
        seeds = _uniform_points(rng, f.box, cfg.n_orbits, shrink=0.8)
        total, quads, failures, traced = 0, 0, 0, 0
        for k, x0 in enumerate(seeds):
            try:
                traj = trace(f, x0, kind, IntegratorConfig(t_span=(-5.0, 5.0)))
            except TraceError:
                continue
            if len(traj) < 3:
                continue
            traced += 1
            r = scan_pattern(f, traj, eta, pattern, trajectory_id=f"{kind}-{k}")
            total += len(r.violations)
            quads += r.quadruples
            failures += r.hypothesis_failures
        out.append(record(f"pattern-scan-{kind}", "forbidden-pattern",
                          {"eta": eta, "eta_source": source, "orbits": traced, "pattern": pattern},
                          {"violations": total, "quadruples": quads, "hypothesis_failures": failures},
                          0, total == 0))
    return out


def suite_foliation(f: VectorField, cfg: SuiteConfig) -> list[dict]:
    rng = rng_for(cfg.seed, "foliation")
    box = f.box
    inner = Box(max(box.x1min, -2.0), min(box.x1max, 2.0), max(box.x2min, -2.0), min(box.x2max, 2.0))
    samples = _uniform_points(rng, inner, cfg.n_samples)
    try:
        recs = foliation_probe(f, samples)
    except (HypothesisError, TraceError) as exc:
        return [error_record("foliation-probe", "foliation", str(exc))]
    reached = [r.distance for r in recs if r.distance is not None]
    inputs = {"samples": cfg.n_samples, "unreachable": len(recs) - len(reached)}
    if not reached:
        return [record("foliation-probe", "foliation", inputs, None, 1e-4, False, "skipped",
                       "no sample level is reached by the base trajectory")]
    worst = max(reached)
    return [record("foliation-probe", "foliation", inputs, worst, 1e-4, worst <= 1e-4)]


def dense_sup(fn, start: float, limit: float, n: int = 1_000_000, t_max: float = 1e12) -> float:
    """Grid oracle for a supremum over [start, inf): log-spaced samples plus the tail limit."""
    t = np.exp(np.linspace(math.log(start), math.log(t_max), n))
    return max(float(np.max(fn(t))), limit)


def constants_records(eta: float, d: float = 1.0, oracle_points: int = 1_000_000) -> list[dict]:
    rep = constants(eta)
    out = []
    for label, ok in rep.inequalities().items():
        out.append(record(f"inequality: {label}", "growth-constants", {"eta": eta},
                          {"C1": rep.C1, "C2": rep.C2}, None, ok))
    oracles = {
        "C1": (dense_sup(lambda t: h1(t, eta), 1.0, rep.h1_limit, oracle_points), rep.C1),
        "h2_sup": (dense_sup(lambda t: h2(t, eta), 1.0, rep.h2_limit, oracle_points), rep.h2_sup),
        "C_eta": (2 * dense_sup(lambda r: c_eta_ratio(r, eta, rep.C1, rep.C2), 2.0, rep.C1 + rep.C2,
                                oracle_points), rep.C_eta),
    }
    for key, (grid, golden) in oracles.items():
        rel = abs(grid - golden) / abs(golden)
        out.append(record(f"sup-oracle-{key}", "growth-constants", {"eta": eta, "grid": oracle_points},
                          {"golden": golden, "grid": grid, "relative": rel}, 1e-6, rel <= 1e-6))
    p = partition_params(d, eta)
    out.append(record("dyadic-tail", "partition-integers", {"d": d, "eta": eta, "m": p.m_dyadic},
                      p.dyadic_tail, eta**4, p.dyadic_ok))
    out.append(record("geometric-tail", "partition-integers", {"d": d, "eta": eta, "m": p.m_geometric},
                      p.geometric_tail, eta**2 / 4, p.geometric_ok))
    return out


def suite_constants(f: VectorField | None, cfg: SuiteConfig) -> list[dict]:
    if f is None or cfg.eta is not None:
        return constants_records(1.0 if cfg.eta is None else cfg.eta)
    try:
        eta, _ = _suite_eta(f, cfg)
    except HypothesisError as exc:
        return [error_record("growth-constants", "growth-constants", str(exc))]
    return constants_records(eta)


def _pair_summary(name: str, anchor: str, recs, eta: float) -> dict:
    reached = [r for r in recs if r.y is not None]
    hyp_bad = [r for r in reached if not r.hypothesis_ok]
    broken = [r for r in reached if r.hypothesis_ok and not r.bound_holds]
    ratio = max((r.lhs / r.bound for r in reached), default=None)
    inputs = {"eta": eta, "pairs": len(recs), "reached": len(reached),
              "hypothesis_failed": len(hyp_bad)}
    holds = all(r.bound_holds for r in reached)
    if not reached:
        return record(name, anchor, inputs, None, 1.0, False, "skipped", "no pair was reachable")
    status = "fail" if broken else "hypothesis-failed" if hyp_bad else "pass"
    note = "small-ball hypothesis fails at some base points; bound checked but not claimed" if hyp_bad else ""
    return record(name, anchor, inputs, {"max_ratio": ratio, "max_distance": max(r.distance for r in reached)},
                  1.0, holds, status, note)


def suite_log_growth(f: VectorField, cfg: SuiteConfig) -> list[dict]:
    out = []
    try:
        growth = check_log_growth(f, cfg.radii, cfg.eta)
    except (ValueError, BranchError, ex.ExprError) as exc:
        return [error_record("log-growth", "log-growth", str(exc))]
    for g in growth:
        out.append(record(f"log-growth-R{g.radius:g}", "log-growth",
                          {"radius": g.radius, "eta": g.eta, "eta_source": g.eta_source,
                           "spacing": g.spacing},
                          {"osc": g.measured_osc, "small_ball_osc": g.hypothesis_osc,
                           "small_ball_failure": g.hypothesis_failure},
                          g.bound, g.bound_holds, g.status,
                          "" if g.hypothesis_ok else "small-ball hypothesis fails; bound not claimed"))
    try:
        eta, _ = _suite_eta(f, cfg)
    except HypothesisError as exc:
        out.append(error_record("log-bound", "log-bound", str(exc)))
        return out
    rng = rng_for(cfg.seed, "log-growth")
    pts = _uniform_points(rng, f.box, cfg.n_pairs, shrink=0.25)
    times = rng.uniform(-2.0, 2.0, cfg.n_pairs)
    pairs = list(zip(map(tuple, pts), times))
    out.append(_pair_summary("log-bound-gradient", "log-bound", check_lemma_log(f, eta, pairs), eta))
    out.append(_pair_summary("log-bound-streamline", "log-bound", check_lemma_logbis(f, eta, pairs), eta))
    return out


SUITE_FUNCTIONS = {
    "elliptic": suite_elliptic,
    "patterns": suite_patterns,
    "foliation": suite_foliation,
    "constants": suite_constants,
    "log-growth": suite_log_growth,
}
