"""Planar velocity fields, their stream functions and admissibility bounds."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import integrate

from . import expr as ex
from .expr import Binary, Constant, Expr, Unary, Variable

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

TOL_STAGNATION = 1e-8
QUAD_TARGET = 1e-9


class FieldError(Exception):
    pass


class MissingPressureError(FieldError):
    pass


class QuadratureError(FieldError):
    def __init__(self, x, achieved: float):
        super().__init__(f"quadrature at {tuple(x)} did not converge (error estimate {achieved:.3g})")
        self.achieved = achieved


class FieldFileError(FieldError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


@dataclass(frozen=True)
class Box:
    x1min: float
    x1max: float
    x2min: float
    x2max: float

    def __post_init__(self):
        if not (self.x1min < self.x1max and self.x2min < self.x2max):
            raise FieldError(f"degenerate box {self}")

    @classmethod
    def square(cls, half: float, center=(0.0, 0.0)) -> "Box":
        c1, c2 = center
        return cls(c1 - half, c1 + half, c2 - half, c2 + half)

    def contains(self, x, slack: float = 0.0) -> bool:
        return (self.x1min - slack <= x[0] <= self.x1max + slack
                and self.x2min - slack <= x[1] <= self.x2max + slack)

    def signed_distance(self, x) -> float:
        """Negative inside, positive outside (max-norm style)."""
        return max(self.x1min - x[0], x[0] - self.x1max, self.x2min - x[1], x[1] - self.x2max)

    def grid(self, n: int):
        xs = np.linspace(self.x1min, self.x1max, n)
        ys = np.linspace(self.x2min, self.x2max, n)
        return np.meshgrid(xs, ys, indexing="xy")

    def scaled(self, factor: float) -> "Box":
        a, b = sorted((self.x1min * factor, self.x1max * factor))
        c, d = sorted((self.x2min * factor, self.x2max * factor))
        return Box(a, b, c, d)

    def shifted(self, y) -> "Box":
        return Box(self.x1min + y[0], self.x1max + y[0], self.x2min + y[1], self.x2max + y[1])

    def as_list(self):
        return [self.x1min, self.x1max, self.x2min, self.x2max]


@dataclass(frozen=True, eq=False)
class VectorField:
    """Velocity v = (v1, v2) with optional pressure and stream-function expressions."""

    v1: Expr
    v2: Expr
    env: Mapping[str, float] = dc_field(default_factory=dict)
    name: str = "field"
    box: Box = Box(-2.0, 2.0, -2.0, 2.0)
    pressure: Expr | None = None
    stream: Expr | None = None

    def __post_init__(self):
        for key, value in self.env.items():
            if not math.isfinite(float(value)):
                raise FieldError(f"parameter {key!r} is not finite")
        exprs = [self.v1, self.v2] + [e for e in (self.pressure, self.stream) if e is not None]
        missing = set().union(*(ex.parameters(e) for e in exprs)) - set(self.env)
        if missing:
            raise FieldError(f"unbound parameters: {', '.join(sorted(missing))}")

    @cached_property
    def _fast(self):
        return ex.compile_scalar(self.v1, self.env), ex.compile_scalar(self.v2, self.env)

    def velocity(self, x) -> np.ndarray:
        f1, f2 = self._fast
        return np.array([f1(x[0], x[1]), f2(x[0], x[1])])

    def velocity_xy(self, x1: float, x2: float) -> tuple[float, float]:
        f1, f2 = self._fast
        return f1(x1, x2), f2(x1, x2)

    def velocity_grid(self, x1, x2):
        return (ex.evaluate_array(self.v1, x1, x2, self.env),
                ex.evaluate_array(self.v2, x1, x2, self.env))

    def speed(self, x) -> float:
        return float(np.hypot(*self.velocity(x)))

    @cached_property
    def jacobian(self) -> tuple[Expr, Expr, Expr, Expr]:
        """(dv1/dx1, dv1/dx2, dv2/dx1, dv2/dx2)."""
        return (ex.differentiate(self.v1, "x1"), ex.differentiate(self.v1, "x2"),
                ex.differentiate(self.v2, "x1"), ex.differentiate(self.v2, "x2"))

    def with_box(self, box: Box) -> "VectorField":
        return VectorField(self.v1, self.v2, dict(self.env), self.name, box, self.pressure, self.stream)


@dataclass(frozen=True)
class PressureField:
    p: Expr | None = None


@dataclass(frozen=True)
class FieldBounds:
    eta_lo: float
    eta_hi: float
    grid_spacing: float
    argmin: tuple[float, float]
    argmax: tuple[float, float]
    divergence_max: float

    @property
    def eta(self) -> float:
        if self.eta_hi <= 0:
            return 0.0
        return min(self.eta_lo, 1.0 / self.eta_hi, 1.0)

    @property
    def stagnation(self) -> bool:
        return self.eta_lo <= TOL_STAGNATION

    @property
    def admissible(self) -> bool:
        return (not self.stagnation) and self.divergence_max <= 1e-9 * max(1.0, self.eta_hi)


class StreamFunction:
    """Stream function u with u(0) = 0 and grad-perp u = v.

    Symbolic when an expression is known, otherwise evaluated by adaptive
    quadrature of (v2, -v1) along the segment from the origin.
    """

    def __init__(self, field: VectorField, expression: Expr | None = None):
        self.field = field
        if expression is not None:
            offset = ex.evaluate(expression, (0.0, 0.0), field.env)
            if offset != 0.0:
                expression = ex.simplify(Binary("sub", expression, Constant(offset)))
            self.mode = "symbolic"
            self._fn = ex.compile_scalar(expression, field.env)
        else:
            self.mode = "quadrature"
        self.expression = expression

    def value(self, x) -> float:
        if self.mode == "symbolic":
            return self._fn(float(x[0]), float(x[1]))
        return self.quadrature(x)

    def values(self, x1, x2) -> np.ndarray:
        if self.mode == "symbolic":
            return ex.evaluate_array(self.expression, x1, x2, self.field.env)
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        out = np.array([self.quadrature((a, b)) for a, b in zip(x1.ravel(), x2.ravel())])
        return out.reshape(x1.shape)

    def gradient(self, x) -> np.ndarray:
        v1, v2 = self.field.velocity_xy(float(x[0]), float(x[1]))
        return np.array([v2, -v1])

    def quadrature(self, x, path: str = "segment") -> float:
        x1, x2 = float(x[0]), float(x[1])
        if x1 == 0.0 and x2 == 0.0:
            return 0.0
        vel = self.field.velocity_xy
        if path == "segment":
            def integrand(s):
                a, b = vel(s * x1, s * x2)
                return b * x1 - a * x2
            return _quad(integrand, 0.0, 1.0, x)
        if path == "L":
            first = _quad(lambda s: vel(s, 0.0)[1], 0.0, x1, x) if x1 else 0.0
            second = _quad(lambda s: -vel(x1, s)[0], 0.0, x2, x) if x2 else 0.0
            return first + second
        raise ValueError(f"unknown path {path!r}")


def _quad(fn, a, b, x) -> float:
    value, err = integrate.quad(fn, a, b, epsabs=QUAD_TARGET / 10, epsrel=1e-13, limit=200)
    if not err <= QUAD_TARGET:
        raise QuadratureError(x, err)
    return value


def stream_eval(u: StreamFunction, x) -> float:
    return u.value(x)


def stream_grad(u: StreamFunction, x) -> np.ndarray:
    return u.gradient(x)


def stream_function(f: VectorField) -> StreamFunction:
    return StreamFunction(f, f.stream)


# ---------------------------------------------------------------- built-in flows

def _require(params: Mapping, names, flow: str):
    missing = [n for n in names if n not in params]
    if missing:
        raise FieldError(f"{flow} needs parameters: {', '.join(missing)}")


def _shear_parts(V: Expr, angle: float, antiderivative: Expr | None):
    c, s = math.cos(angle), math.sin(angle)
    across = ex.simplify(Binary("add", Binary("mul", Constant(-s), Variable("x1")),
                                Binary("mul", Constant(c), Variable("x2"))))
    profile = ex.substitute(V, {"x2": across})
    v1 = ex.simplify(Binary("mul", Constant(c), profile))
    v2 = ex.simplify(Binary("mul", Constant(s), profile))
    stream = None
    if antiderivative is None and not ex.depends_on(V, "x1") and not ex.depends_on(V, "x2"):
        antiderivative = Binary("mul", V, Variable("x2"))
    if antiderivative is not None:
        W = ex.substitute(antiderivative, {"x2": across})
        stream = ex.simplify(Unary("neg", W))
    return v1, v2, stream


def _check_antiderivative(V: Expr, W: Expr, env):
    dW = ex.differentiate(W, "x2")
    for s in np.linspace(-3.0, 3.0, 13):
        a = ex.evaluate(dW, (0.0, s), env)
        b = ex.evaluate(V, (0.0, s), env)
        if abs(a - b) > 1e-9 * (1 + abs(b)):
            raise FieldError("shear antiderivative W does not satisfy W' = V")


def builtin(name: str, box: Box | None = None, **params):
    """Return (VectorField, PressureField, StreamFunction) for a named flow.

    Names: ``cellular(alpha, beta)``, ``cosh``, ``shear(V, angle=0, W=None)``
    with V written in the variable x2, and ``couette(a, b)``.
    """
    if name == "cellular":
        _require(params, ("alpha", "beta"), name)
        env = {"alpha": float(params["alpha"]), "beta": float(params["beta"])}
        f = VectorField(
            ex.parse("-beta*sin(alpha*x1)*cos(beta*x2)"),
            ex.parse("alpha*cos(alpha*x1)*sin(beta*x2)"),
            env, "cellular", box or Box(-4.0, 4.0, -4.0, 4.0),
            pressure=ex.parse("beta^2/4*cos(2*alpha*x1)+alpha^2/4*cos(2*beta*x2)"),
            stream=ex.parse("sin(alpha*x1)*sin(beta*x2)"),
        )
    elif name == "cosh":
        f = VectorField(
            ex.parse("-cosh(x1)"), ex.parse("x2*sinh(x1)"), {}, "cosh",
            box or Box(-2.5, 2.5, -10.0, 10.0),
            pressure=ex.parse("-cosh(2*x1)/4+x2^2/2"),
            stream=ex.parse("x2*cosh(x1)"),
        )
    elif name == "shear":
        _require(params, ("V",), name)
        env = {k: float(v) for k, v in params.items() if k not in ("V", "W", "angle")}
        V = ex.as_expr(params["V"])
        W = ex.as_expr(params["W"]) if params.get("W") is not None else None
        if W is not None:
            _check_antiderivative(V, W, env)
        v1, v2, stream = _shear_parts(V, float(params.get("angle", 0.0)), W)
        f = VectorField(v1, v2, env, "shear", box or Box(-4.0, 4.0, -4.0, 4.0),
                        pressure=Constant(0.0), stream=stream)
    elif name == "couette":
        _require(params, ("a", "b"), name)
        env = {"a": float(params["a"]), "b": float(params["b"])}
        f = VectorField(ex.parse("a*x2+b"), Constant(0.0), env, "couette",
                        box or Box(-1.5, 1.5, -1.5, 1.5),
                        pressure=Constant(0.0), stream=ex.parse("-(a*x2^2/2+b*x2)"))
    else:
        raise FieldError(f"unknown built-in flow {name!r}")
    return f, PressureField(f.pressure), StreamFunction(f, f.stream)


def from_stream(stream: Expr | str, env=None, name="field", box: Box | None = None,
                pressure: Expr | str | None = None) -> VectorField:
    """Field v = grad-perp u = (-du/dx2, du/dx1)."""
    u = ex.as_expr(stream)
    v1 = ex.simplify(Unary("neg", ex.differentiate(u, "x2")))
    v2 = ex.differentiate(u, "x1")
    p = ex.as_expr(pressure) if pressure is not None else None
    return VectorField(v1, v2, dict(env or {}), name, box or Box(-2.0, 2.0, -2.0, 2.0), p, u)


# ---------------------------------------------------------------- differential quantities

def divergence(f: VectorField) -> Expr:
    d11, _, _, d22 = f.jacobian
    return ex.simplify(Binary("add", d11, d22))


def vorticity(f: VectorField) -> Expr:
    _, d12, d21, _ = f.jacobian
    return ex.simplify(Binary("sub", d21, d12))


def euler_residual(f: VectorField, p: PressureField | Expr | None = None,
                   box: Box | None = None, n: int = 41) -> float:
    """Max over an n-by-n grid of |v.grad v + grad p| + |div v|."""
    if isinstance(p, PressureField):
        p = p.p
    if p is None:
        p = f.pressure
    if p is None:
        raise MissingPressureError(f"field {f.name!r} has no pressure")
    X1, X2 = (box or f.box).grid(n)
    ev = lambda e: ex.evaluate_array(e, X1, X2, f.env)
    v1, v2 = f.velocity_grid(X1, X2)
    d11, d12, d21, d22 = (ev(e) for e in f.jacobian)
    p1 = ev(ex.differentiate(p, "x1"))
    p2 = ev(ex.differentiate(p, "x2"))
    r1 = v1 * d11 + v2 * d12 + p1
    r2 = v1 * d21 + v2 * d22 + p2
    return float(np.max(np.hypot(r1, r2) + np.abs(d11 + d22)))


def _speed_grid(f: VectorField, X1, X2):
    v1, v2 = f.velocity_grid(X1, X2)
    return np.hypot(v1, v2)


def _zoom(f: VectorField, box: Box, start, h: float, pick, levels: int = 8, m: int = 21):
    best = start
    best_val = float(np.hypot(*f.velocity(start)))
    for _ in range(levels):
        lo1, hi1 = max(box.x1min, best[0] - h), min(box.x1max, best[0] + h)
        lo2, hi2 = max(box.x2min, best[1] - h), min(box.x2max, best[1] + h)
        xs, ys = np.linspace(lo1, hi1, m), np.linspace(lo2, hi2, m)
        X1, X2 = np.meshgrid(xs, ys)
        S = _speed_grid(f, X1, X2)
        k = pick(S)
        val = float(S.flat[k])
        if (val < best_val) if pick is np.argmin else (val > best_val):
            best, best_val = (float(X1.flat[k]), float(X2.flat[k])), val
        h = h / (m // 4)
    return best, best_val


def estimate_eta(f: VectorField, box: Box | None = None, n: int = 201) -> FieldBounds:
    """Bounds on |v| over a box from a grid scan refined near the extremes."""
    box = box or f.box
    X1, X2 = box.grid(n)
    S = _speed_grid(f, X1, X2)
    spacing = max((box.x1max - box.x1min), (box.x2max - box.x2min)) / (n - 1)
    kmin, kmax = int(np.argmin(S)), int(np.argmax(S))
    pmin = (float(X1.flat[kmin]), float(X2.flat[kmin]))
    pmax = (float(X1.flat[kmax]), float(X2.flat[kmax]))
    pmin, lo = _zoom(f, box, pmin, spacing, np.argmin)
    pmax, hi = _zoom(f, box, pmax, spacing, np.argmax)
    lo = min(lo, float(S.flat[kmin]))
    hi = max(hi, float(S.flat[kmax]))
    div = float(np.max(np.abs(ex.evaluate_array(divergence(f), X1, X2, f.env))))
    return FieldBounds(lo, hi, spacing, pmin, pmax, div)


# ---------------------------------------------------------------- transforms

def _compose(f: VectorField, mapping, v1: Expr, v2: Expr, stream: Expr | None, name: str,
             box: Box) -> VectorField:
    pressure = ex.simplify(ex.substitute(f.pressure, mapping)) if f.pressure is not None else None
    return VectorField(ex.simplify(v1), ex.simplify(v2), dict(f.env), name, box, pressure,
                       ex.simplify(stream) if stream is not None else None)


def rescale(f: VectorField, factor: float) -> VectorField:
    """w(x) = v(factor * x)."""
    if factor == 0:
        raise FieldError("rescale factor must be nonzero")
    k = Constant(float(factor))
    mapping = {"x1": Binary("mul", k, Variable("x1")), "x2": Binary("mul", k, Variable("x2"))}
    v1 = ex.substitute(f.v1, mapping)
    v2 = ex.substitute(f.v2, mapping)
    stream = None
    if f.stream is not None:
        stream = Binary("div", ex.substitute(f.stream, mapping), k)
    return _compose(f, mapping, v1, v2, stream, f"rescale({f.name},{factor!r})",
                    f.box.scaled(1.0 / factor))


def shift(f: VectorField, y) -> VectorField:
    """w(x) = v(y + x)."""
    y1, y2 = float(y[0]), float(y[1])
    mapping = {"x1": Binary("add", Constant(y1), Variable("x1")),
               "x2": Binary("add", Constant(y2), Variable("x2"))}
    stream = None
    if f.stream is not None:
        base = ex.evaluate(f.stream, (y1, y2), f.env)
        stream = Binary("sub", ex.substitute(f.stream, mapping), Constant(base))
    return _compose(f, mapping, ex.substitute(f.v1, mapping), ex.substitute(f.v2, mapping),
                    stream, f"shift({f.name},{y1!r},{y2!r})", f.box.shifted((-y1, -y2)))


def rotate(f: VectorField, angle: float) -> VectorField:
    """w(x) = R v(R^-1 x) for the rotation R by ``angle``."""
    c, s = math.cos(angle), math.sin(angle)
    C, S = Constant(c), Constant(s)
    X1, X2 = Variable("x1"), Variable("x2")
    mapping = {"x1": Binary("add", Binary("mul", C, X1), Binary("mul", S, X2)),
               "x2": Binary("sub", Binary("mul", C, X2), Binary("mul", S, X1))}
    a = ex.substitute(f.v1, mapping)
    b = ex.substitute(f.v2, mapping)
    v1 = Binary("sub", Binary("mul", C, a), Binary("mul", S, b))
    v2 = Binary("add", Binary("mul", S, a), Binary("mul", C, b))
    stream = ex.substitute(f.stream, mapping) if f.stream is not None else None
    b0 = f.box
    cx, cy = (b0.x1min + b0.x1max) / 2, (b0.x2min + b0.x2max) / 2
    half = min(b0.x1max - b0.x1min, b0.x2max - b0.x2min) / 2 / math.sqrt(2)
    center = (c * cx - s * cy, s * cx + c * cy)
    return _compose(f, mapping, v1, v2, stream, f"rotate({f.name},{angle!r})",
                    Box.square(half, center))


# ---------------------------------------------------------------- field files

_FIELD_KEYS = {"v1", "v2", "stream", "pressure", "builtin", "V", "W", "angle"}


def _line_of(text: str, key: str) -> int:
    if key.startswith("["):
        pattern = re.compile(rf"^\s*{re.escape(key)}\s*$")
    else:
        pattern = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for i, line in enumerate(text.splitlines(), start=1):
        if pattern.match(line):
            return i
    return 1


def load_field(path) -> VectorField:
    """Read a TOML field definition.

    Either ``[field] builtin = "name"`` plus ``[params]``, or explicit
    ``v1``/``v2`` (or ``stream``) expressions.  ``[box]`` holds
    ``x1 = [lo, hi]`` and ``x2 = [lo, hi]``.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FieldFileError(path, 0, f"cannot read file: {exc.strerror}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise FieldFileError(path, int(m.group(1)) if m else 1, str(exc)) from None
    return field_from_mapping(data, path, text)


def field_from_mapping(data: Mapping, path="<mapping>", text: str = "") -> VectorField:
    table = data.get("field", {})
    params = dict(data.get("params", {}))
    unknown = set(table) - _FIELD_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise FieldFileError(path, _line_of(text, key), f"unknown field key {key!r}")
    box = None
    if "box" in data:
        try:
            b = data["box"]
            box = Box(float(b["x1"][0]), float(b["x1"][1]), float(b["x2"][0]), float(b["x2"][1]))
        except (KeyError, TypeError, ValueError, IndexError, FieldError) as exc:
            raise FieldFileError(path, _line_of(text, "x1"), f"bad box: {exc}") from None

    def parsed(key):
        try:
            return ex.parse(str(table[key]))
        except ex.ExprSyntaxError as exc:
            raise FieldFileError(path, _line_of(text, key), f"{key}: {exc}") from None

    try:
        if "builtin" in table:
            kind = str(table["builtin"])
            if kind == "shear":
                params["V"] = parsed("V") if "V" in table else params.get("V")
                if "W" in table:
                    params["W"] = parsed("W")
                params["angle"] = float(table.get("angle", params.get("angle", 0.0)))
                if params["V"] is None:
                    raise FieldError("shear needs V")
            f, _, _ = builtin(kind, box=box, **params)
            if data.get("name"):
                f = VectorField(f.v1, f.v2, f.env, str(data["name"]), f.box, f.pressure, f.stream)
            return f
        name = str(data.get("name", Path(str(path)).stem))
        pressure = parsed("pressure") if "pressure" in table else None
        env = {k: float(v) for k, v in params.items()}
        if "v1" in table and "v2" in table:
            stream = parsed("stream") if "stream" in table else None
            return VectorField(parsed("v1"), parsed("v2"), env, name,
                               box or Box(-2.0, 2.0, -2.0, 2.0), pressure, stream)
        if "stream" in table:
            return from_stream(parsed("stream"), env, name, box, pressure)
        raise FieldFileError(path, _line_of(text, "[field]") if text else 1,
                             "field needs v1 and v2, a stream expression, or a builtin name")
    except FieldFileError:
        raise
    except (FieldError, ex.ExprError, ValueError, TypeError) as exc:
        line = _line_of(text, "builtin") if "builtin" in table else _line_of(text, "v1")
        raise FieldFileError(path, line, str(exc)) from None
