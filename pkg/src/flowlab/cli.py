"""Command-line entry point: ``flowlab <subcommand> ...``."""
from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

from . import arcs as arc_mod
from .argument import BranchError, check_log_growth, oscillation
from .constants import constants, partition_params
from .field import FieldError, FieldFileError, estimate_eta, euler_residual, load_field
from .report import CurveFileError, emit_csv, emit_json, make_report, plain, read_curve_csv
from .suites import (SUITE_FUNCTIONS, SUITES, SuiteConfig, constants_records, field_checks,
                     shear_verdict_record)
from .tracer import KINDS, IntegratorConfig, TraceError, trace

FIELD_DIR = Path(__file__).with_name("fields")
DEMO_FIXTURES = (("cellular", "hypothesis-violated"), ("cosh", "non-shear"), ("shear", "shear"))
# options whose values may start with '-' (e.g. --tspan -20,20)
_VALUE_OPTIONS = {"--from", "--tspan", "--center", "--radii", "--a", "--b", "--eta", "--d"}


class UsageError(Exception):
    pass


def _pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from None


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def resolve_field_path(ref: str) -> Path:
    """A file path, or the name of a shipped field file such as ``cosh``."""
    p = Path(ref)
    if p.is_file():
        return p
    shipped = FIELD_DIR / f"{ref}.toml"
    if shipped.is_file():
        return shipped
    raise UsageError(f"{ref}:0: no such field file or shipped field")


def _threads() -> int:
    raw = os.environ.get("FLOWLAB_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"FLOWLAB_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"FLOWLAB_THREADS must be a positive integer, got {raw!r}")
    return n


def _check_output(path):
    if path is None:
        return
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise UsageError(f"{path}:0: output directory does not exist")


def _progress(args, message: str):
    if not args.quiet:
        print(message, file=sys.stderr)


def run_jobs(jobs, threads: int):
    """Run (label, fn) jobs; results come back in submission order with wall times."""
    def timed(job):
        label, fn = job
        start = time.perf_counter()
        out = fn()
        return label, out, time.perf_counter() - start

    if threads <= 1 or len(jobs) <= 1:
        return [timed(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
        return list(pool.map(timed, jobs))


# ---------------------------------------------------------------- subcommands

def cmd_field(args) -> int:
    f = load_field(resolve_field_path(args.file))
    bounds = estimate_eta(f, f.box, args.grid)
    try:
        residual = euler_residual(f, None, f.box, 41)
    except FieldError:
        residual = None
    out = {"name": f.name, "box": f.box.as_list(), "divergence_max": bounds.divergence_max,
           "euler_residual": residual, "eta_lo": bounds.eta_lo, "eta_hi": bounds.eta_hi,
           "eta": bounds.eta, "grid_spacing": bounds.grid_spacing, "admissible": bounds.admissible}
    emit_json(out, stream=sys.stdout)
    return 0


def cmd_trace(args) -> int:
    f = load_field(resolve_field_path(args.field))
    _check_output(args.out)
    cfg = IntegratorConfig(rel_tol=args.rtol, abs_tol=args.atol, t_span=args.tspan,
                           max_step=args.max_step)
    traj = trace(f, args.start, args.kind, cfg)
    _progress(args, f"traced {len(traj)} samples; events: "
                    + ", ".join(name for name, _ in traj.events))
    emit_csv(traj, path=args.out, stream=sys.stdout)
    return 0


def cmd_osc(args) -> int:
    f = load_field(resolve_field_path(args.field))
    r = oscillation(f, args.center, args.radius, args.grid, of=args.of)
    emit_json(asdict(r), stream=sys.stdout)
    return 0


def cmd_growth(args) -> int:
    f = load_field(resolve_field_path(args.field))
    recs = check_log_growth(f, args.radii, args.eta, args.spacing)
    emit_json([dict(asdict(r), status=r.status) for r in recs], stream=sys.stdout)
    return 0 if all(r.bound_holds for r in recs) else 1


def cmd_arcs(args) -> int:
    t, pts, tang = read_curve_csv(args.curve)
    curve = arc_mod.Curve(t, pts, tang)
    c = arc_mod.census(curve, args.a, args.b, check_simple=not args.no_simple_check)
    out = {"N_l": c.N_l, "N_r": c.N_r, "N_d": c.N_d, "N_middle": c.N_middle,
           "N_exterior": c.N_exterior, "theta_delta": c.theta_delta, "chord": c.chord,
           "length": c.length, "bound_value": c.bound_value, "bound_ok": c.bound_ok,
           "double_bound_ok": c.double_bound_ok,
           "intervals": [asdict(iv) for iv in c.intervals]}
    if args.brute:
        out["brute"] = list(arc_mod.brute_census(curve, args.a, args.b).counts())
    emit_json(out, stream=sys.stdout)
    return 0


def cmd_constants(args) -> int:
    rep = constants(args.eta)
    out = dict(asdict(rep), inequalities=rep.inequalities())
    p = partition_params(args.d, args.eta)
    out["partition"] = dict(asdict(p), dyadic_ok=p.dyadic_ok, geometric_ok=p.geometric_ok)
    emit_json(out, stream=sys.stdout)
    return 0


def _tagged(records, **tags):
    return [dict(r, **tags) for r in records]


def cmd_verify(args) -> int:
    path = resolve_field_path(args.field)
    _check_output(args.out)
    threads = _threads()
    f = load_field(path)
    suites = SUITES if args.suite == "all" else (args.suite,)
    cfg = SuiteConfig(eta=args.eta, seed=args.seed, radii=args.radii)
    jobs = [(s, (lambda s=s: SUITE_FUNCTIONS[s](f, cfg))) for s in suites]
    _progress(args, f"verifying {f.name}: {', '.join(suites)}")
    results = run_jobs(jobs, threads)
    records = []
    for label, recs, _ in results:
        records += _tagged(recs, suite=label, field=f.name)
    config = {"field": args.field, "suite": args.suite, "eta": args.eta, "seed": args.seed,
              "radii": list(args.radii)}
    timings = {label: dt for label, _, dt in results} if args.timings else None
    report = make_report("verify", config, records, timings)
    emit_json(report, path=args.out, stream=sys.stdout)
    _progress(args, f"summary: {report['summary']}")
    return report["exit_code"]


def demo_jobs(seed: int):
    cfg = SuiteConfig(seed=seed, n_points=500, n_orbits=10, n_samples=50, n_pairs=10)
    jobs = [("constants", lambda: _tagged(constants_records(1.0), suite="constants"))]
    for name, expected in DEMO_FIXTURES:
        f = load_field(FIELD_DIR / f"{name}.toml")

        def fixture(f=f, name=name, expected=expected):
            recs = _tagged(field_checks(f, seed, 100, 20), suite="field")
            recs.append(dict(shear_verdict_record(f, expected), suite="shear"))
            if expected != "hypothesis-violated":
                for s in ("elliptic", "patterns", "foliation", "log-growth"):
                    recs += _tagged(SUITE_FUNCTIONS[s](f, cfg), suite=s)
            return _tagged(recs, field=name)
        jobs.append((name, fixture))
    return jobs


def cmd_demo(args) -> int:
    _check_output(args.out)
    threads = _threads()
    _progress(args, "running fixtures: " + ", ".join(n for n, _ in DEMO_FIXTURES))
    results = run_jobs(demo_jobs(args.seed), threads)
    records = [r for _, recs, _ in results for r in recs]
    timings = {label: dt for label, _, dt in results} if args.timings else None
    report = make_report("demo", {"seed": args.seed, "fixtures": [n for n, _ in DEMO_FIXTURES]},
                         records, timings)
    emit_json(report, path=args.out, stream=sys.stdout if args.out is None else None)
    _progress(args, f"summary: {report['summary']}")
    return report["exit_code"]


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowlab", description="Planar steady Euler flow toolkit.")
    parser.add_argument("--quiet", action="store_true", help="suppress progress messages")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS,
                       help="suppress progress messages")
        return p

    p = common(sub.add_parser("field", help="field definition checks"))
    p.add_argument("action", choices=("check",))
    p.add_argument("file", help="field file or shipped field name")
    p.add_argument("--grid", type=int, default=201)
    p.set_defaults(func=cmd_field)

    p = common(sub.add_parser("trace", help="trace a streamline or gradient trajectory to CSV"))
    p.add_argument("--field", required=True)
    p.add_argument("--kind", choices=KINDS, default="streamline")
    p.add_argument("--from", dest="start", type=_pair, default=(0.0, 0.0))
    p.add_argument("--tspan", type=_pair, default=(-10.0, 10.0))
    p.add_argument("--max-step", type=float, default=float("inf"))
    p.add_argument("--rtol", type=float, default=1e-9)
    p.add_argument("--atol", type=float, default=1e-11)
    p.add_argument("--out")
    p.set_defaults(func=cmd_trace)

    p = common(sub.add_parser("osc", help="oscillation of the field argument over a ball"))
    p.add_argument("--field", required=True)
    p.add_argument("--center", type=_pair, default=(0.0, 0.0))
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--grid", type=int, default=201)
    p.add_argument("--of", choices=("velocity", "gradient"), default="velocity")
    p.set_defaults(func=cmd_osc)

    p = common(sub.add_parser("growth", help="logarithmic growth of the argument oscillation"))
    p.add_argument("--field", required=True)
    p.add_argument("--radii", type=_floats, default=(2.0, 4.0, 8.0, 16.0))
    p.add_argument("--eta", type=float)
    p.add_argument("--spacing", type=float, default=0.05)
    p.set_defaults(func=cmd_growth)

    p = common(sub.add_parser("arcs", help="arc census of a curve CSV"))
    p.add_argument("--curve", required=True)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--brute", action="store_true", help="also run the exact-arithmetic oracle")
    p.add_argument("--no-simple-check", action="store_true")
    p.set_defaults(func=cmd_arcs)

    p = common(sub.add_parser("verify", help="run verification suites on a field"))
    p.add_argument("--field", required=True)
    p.add_argument("--suite", choices=("all",) + SUITES, default="all")
    p.add_argument("--eta", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--radii", type=_floats, default=(2.0, 4.0, 8.0, 16.0))
    p.add_argument("--out")
    p.add_argument("--timings", action="store_true", help="include wall times (not deterministic)")
    p.set_defaults(func=cmd_verify)

    p = common(sub.add_parser("constants", help="explicit growth constants for eta"))
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--d", type=float, default=1.0, help="chord length for partition integers")
    p.set_defaults(func=cmd_constants)

    p = common(sub.add_parser("demo", help="run every built-in fixture end to end"))
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out")
    p.add_argument("--timings", action="store_true", help="include wall times (not deterministic)")
    p.set_defaults(func=cmd_demo)
    return parser


def _join_values(argv: list[str]) -> list[str]:
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in _VALUE_OPTIONS and i + 1 < len(argv):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_join_values(argv))
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (FieldFileError, UsageError, CurveFileError) as exc:
        print(f"flowlab: error: {exc}", file=sys.stderr)
        return 2
    except (FieldError, TraceError, BranchError, arc_mod.ArcError, ValueError) as exc:
        print(f"flowlab: error: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
