"""Deterministic JSON reports and trajectory CSV files."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from .tracer import Trajectory

SCHEMA_VERSION = 1
CSV_HEADER = ("t", "x1", "x2", "v1", "v2", "u")
SCHEMA_PATH = Path(__file__).with_name("report.schema.json")


class CurveFileError(Exception):
    pass


def plain(obj):
    """Convert numpy scalars, arrays, tuples and dataclasses to JSON-ready values.

    Non-finite floats become None so the output stays strict JSON.
    """
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                if f.repr}
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def make_report(command: str, config: dict, records: list[dict], timings: dict | None = None) -> dict:
    statuses = [r["status"] for r in records]
    if "error" in statuses:
        code = 2
    elif "fail" in statuses:
        code = 1
    else:
        code = 0
    summary = {s: statuses.count(s) for s in ("pass", "fail", "hypothesis-failed", "skipped", "error")}
    report = {
        "schema_version": SCHEMA_VERSION,
        "tool": "flowlab",
        "version": __version__,
        "command": command,
        "config": config,
        "records": records,
        "summary": summary,
        "exit_code": code,
    }
    if timings is not None:
        report["timings"] = timings
    return plain(report)


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, two-space indent, shortest round-trip floats, LF endings."""
    return json.dumps(plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def emit_json(obj, path=None, stream=None) -> str:
    text = dumps(obj)
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    elif stream is not None:
        stream.write(text)
    return text


def trajectory_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_HEADER) + "\n")
    for t, x, v, u in zip(traj.t, traj.x, traj.velocity, traj.u):
        buf.write(",".join(repr(float(q)) for q in (t, x[0], x[1], v[0], v[1], u)) + "\n")
    for name, t in traj.events:
        buf.write(f"# event,{name},{float(t)!r}\n")
    return buf.getvalue()


def emit_csv(traj: Trajectory, path=None, stream=None) -> str:
    text = trajectory_csv(traj)
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    elif stream is not None:
        stream.write(text)
    return text


def read_curve_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """(t, points, tangents or None) from a trajectory CSV; '#' lines are skipped."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise CurveFileError(f"{path}:0: cannot read file: {exc.strerror}") from None
    rows = [(i, line) for i, line in enumerate(lines, start=1) if line.strip() and not line.startswith("#")]
    if not rows:
        raise CurveFileError(f"{path}:1: no header")
    header_line, header = rows[0]
    cols = [c.strip() for c in next(csv.reader([header]))]
    for need in ("x1", "x2"):
        if need not in cols:
            raise CurveFileError(f"{path}:{header_line}: missing column {need!r}")
    data = []
    for lineno, line in rows[1:]:
        try:
            values = [float(c) for c in next(csv.reader([line]))]
        except ValueError:
            raise CurveFileError(f"{path}:{lineno}: non-numeric value") from None
        if len(values) != len(cols):
            raise CurveFileError(f"{path}:{lineno}: expected {len(cols)} values, got {len(values)}")
        data.append(values)
    if len(data) < 2:
        raise CurveFileError(f"{path}:{header_line}: need at least two samples")
    arr = np.array(data)
    col = {c: arr[:, k] for k, c in enumerate(cols)}
    t = col["t"] if "t" in col else np.arange(len(arr), dtype=float)
    pts = np.column_stack((col["x1"], col["x2"]))
    tang = np.column_stack((col["v1"], col["v2"])) if "v1" in col and "v2" in col else None
    return t, pts, tang


def load_schema() -> dict:
    return json.loads(SCHEMA_PATH.read_text())
