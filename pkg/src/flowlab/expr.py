"""Small symbolic expression language over the plane coordinates x1, x2.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right associative
    atom   := NUMBER | 'x1' | 'x2' | 'pi' | NAME | FUNC '(' expr ')' | '(' expr ')'

Any other identifier is a named parameter resolved from an environment
mapping at evaluation time.  Expressions are immutable trees and compare
structurally.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np

UNARY_OPS = ("neg", "sin", "cos", "sinh", "cosh", "tanh", "exp", "ln", "sqrt", "abs")
FUNCTIONS = UNARY_OPS[1:]
BINARY_OPS = {"+": "add", "-": "sub", "*": "mul", "/": "div", "^": "pow"}
BINARY_SYMBOL = {v: k for k, v in BINARY_OPS.items()}
VARIABLES = ("x1", "x2")


class ExprError(Exception):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ExprDomainError(ExprError):
    def __init__(self, message: str, subtree: "Expr"):
        super().__init__(f"{message} in '{to_string(subtree)}'")
        self.subtree = subtree


class UnboundParameterError(ExprError):
    pass


@dataclass(frozen=True)
class Constant:
    value: float


@dataclass(frozen=True)
class Variable:
    name: str


@dataclass(frozen=True)
class Parameter:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    child: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Constant, Variable, Parameter, Unary, Binary]
ZERO = Constant(0.0)
ONE = Constant(1.0)


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, off = self.take()
        if text != value or kind != "op":
            found = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", off)

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(BINARY_OPS[op], node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(BINARY_OPS[op], node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return Binary("pow", base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, text, off = self.take()
        if kind == "num":
            return Constant(float(text))
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if text not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {text!r}", off)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Unary(text, arg)
            if text in FUNCTIONS:
                raise ExprSyntaxError(f"function {text!r} needs an argument", off)
            if text in VARIABLES:
                return Variable(text)
            if text == "pi":
                return Constant(math.pi)
            return Parameter(text)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"unexpected {found}", off)


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree."""
    if text.strip() == "":
        raise ExprSyntaxError("empty expression", 0)
    p = _Parser(text)
    node = p.expr()
    kind, tok, off = p.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected {tok!r}", off)
    return node


# ---------------------------------------------------------------- printing

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}


def _fmt_number(value: float) -> str:
    if value == math.pi:
        return "pi"
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value)) if value != 0 or math.copysign(1, value) > 0 else "0"
    return repr(value)


def to_string(e: Expr) -> str:
    """Canonical text: explicit '*', parentheses wherever precedence needs them."""
    text, _ = _show(e)
    return text


def _show(e: Expr):
    if isinstance(e, Constant):
        s = _fmt_number(abs(e.value)) if e.value != 0 else "0"
        if e.value < 0:
            return "(-" + s + ")", 5
        return s, 5
    if isinstance(e, (Variable, Parameter)):
        return e.name, 5
    if isinstance(e, Unary):
        inner, prec = _show(e.child)
        if e.op == "neg":
            if prec <= _PREC["neg"]:
                inner = "(" + inner + ")"
            return "-" + inner, _PREC["neg"]
        return f"{e.op}({inner})", 5
    left, lp = _show(e.left)
    right, rp = _show(e.right)
    prec = _PREC[e.op]
    if e.op == "pow":
        if lp <= prec:
            left = "(" + left + ")"
        if rp < prec:
            right = "(" + right + ")"
    else:
        if lp < prec:
            left = "(" + left + ")"
        if rp <= prec:
            right = "(" + right + ")"
    return f"{left}{BINARY_SYMBOL[e.op]}{right}", prec


# ---------------------------------------------------------------- evaluation

def _pow(a: float, b: float) -> float:
    if a < 0 and not float(b).is_integer():
        raise ValueError("negative base with non-integer exponent")
    return math.pow(a, b)


def _ln(a: float) -> float:
    if a <= 0:
        raise ValueError("logarithm of non-positive value")
    return math.log(a)


_SCALAR_UNARY: dict[str, Callable[[float], float]] = {
    "neg": lambda a: -a,
    "sin": math.sin,
    "cos": math.cos,
    "sinh": math.sinh,
    "cosh": math.cosh,
    "tanh": math.tanh,
    "exp": math.exp,
    "ln": _ln,
    "sqrt": math.sqrt,
    "abs": abs,
}

_SCALAR_BINARY: dict[str, Callable[[float, float], float]] = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / b,
    "pow": _pow,
}

_ARITH_ERRORS = (ValueError, ZeroDivisionError, OverflowError)


def _lookup(env: Mapping[str, float], name: str) -> float:
    try:
        return float(env[name])
    except KeyError:
        raise UnboundParameterError(f"parameter {name!r} is not bound") from None


def evaluate(e: Expr, x, env: Mapping[str, float] | None = None) -> float:
    """Evaluate at the point ``x = (x1, x2)`` by walking the tree."""
    env = env or {}
    point = (float(x[0]), float(x[1]))

    def walk(node: Expr) -> float:
        if isinstance(node, Constant):
            return node.value
        if isinstance(node, Variable):
            return point[0] if node.name == "x1" else point[1]
        if isinstance(node, Parameter):
            return _lookup(env, node.name)
        if isinstance(node, Unary):
            a = walk(node.child)
            try:
                return _SCALAR_UNARY[node.op](a)
            except _ARITH_ERRORS as exc:
                raise ExprDomainError(str(exc), node) from None
        a = walk(node.left)
        b = walk(node.right)
        try:
            return _SCALAR_BINARY[node.op](a, b)
        except _ARITH_ERRORS as exc:
            raise ExprDomainError(str(exc), node) from None

    return walk(e)


def parameters(e: Expr) -> set[str]:
    """Names of all parameters in the tree."""
    if isinstance(e, Parameter):
        return {e.name}
    if isinstance(e, Unary):
        return parameters(e.child)
    if isinstance(e, Binary):
        return parameters(e.left) | parameters(e.right)
    return set()


def depends_on(e: Expr, var: str) -> bool:
    if isinstance(e, Variable):
        return e.name == var
    if isinstance(e, Unary):
        return depends_on(e.child, var)
    if isinstance(e, Binary):
        return depends_on(e.left, var) or depends_on(e.right, var)
    return False


def _source(e: Expr, env: Mapping[str, float]) -> str:
    if isinstance(e, Constant):
        return repr(e.value)
    if isinstance(e, Variable):
        return e.name
    if isinstance(e, Parameter):
        return repr(_lookup(env, e.name))
    if isinstance(e, Unary):
        return f"_u_{e.op}({_source(e.child, env)})"
    return f"_b_{e.op}({_source(e.left, env)}, {_source(e.right, env)})"


def compile_scalar(e: Expr, env: Mapping[str, float] | None = None) -> Callable[[float, float], float]:
    """Return ``fn(x1, x2) -> float``, bit-identical to :func:`evaluate`."""
    env = env or {}
    namespace = {f"_u_{k}": v for k, v in _SCALAR_UNARY.items()}
    namespace.update({f"_b_{k}": v for k, v in _SCALAR_BINARY.items()})
    code = compile(f"lambda x1, x2: {_source(e, env)}", "<expr>", "eval")
    fast = eval(code, namespace)

    def fn(x1: float, x2: float) -> float:
        try:
            return fast(x1, x2)
        except _ARITH_ERRORS:
            return evaluate(e, (x1, x2), env)

    return fn


_ARRAY_UNARY = {
    "neg": np.negative,
    "sin": np.sin,
    "cos": np.cos,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "exp": np.exp,
    "ln": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}
_ARRAY_BINARY = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "div": np.divide,
}


def _array_pow(a, b):
    bad = (a < 0) & (np.floor(b) != b)
    if np.any(bad):
        raise FloatingPointError("negative base with non-integer exponent")
    return np.power(a, b)


def evaluate_array(e: Expr, x1, x2, env: Mapping[str, float] | None = None) -> np.ndarray:
    """Vectorized evaluation over arrays of coordinates.

    Floating point trouble is located at the first offending point and
    re-raised as an :class:`ExprDomainError` naming the subtree.
    """
    env = env or {}
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    shape = np.broadcast(x1, x2).shape

    def walk(node: Expr):
        if isinstance(node, Constant):
            return np.full(shape, node.value)
        if isinstance(node, Variable):
            return np.broadcast_to(x1 if node.name == "x1" else x2, shape)
        if isinstance(node, Parameter):
            return np.full(shape, _lookup(env, node.name))
        if isinstance(node, Unary):
            return _ARRAY_UNARY[node.op](walk(node.child))
        a, b = walk(node.left), walk(node.right)
        if node.op == "pow":
            return _array_pow(a, b)
        return _ARRAY_BINARY[node.op](a, b)

    try:
        with np.errstate(divide="raise", invalid="raise", over="raise", under="ignore"):
            return np.array(walk(e), dtype=float)
    except FloatingPointError:
        flat1 = np.broadcast_to(x1, shape).ravel()
        flat2 = np.broadcast_to(x2, shape).ravel()
        for a, b in zip(flat1, flat2):
            evaluate(e, (a, b), env)
        raise ExprDomainError("floating point error", e) from None


# ---------------------------------------------------------------- rewriting

def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables (and optionally parameters) by expressions."""
    if isinstance(e, (Variable, Parameter)):
        return mapping.get(e.name, e)
    if isinstance(e, Unary):
        return Unary(e.op, substitute(e.child, mapping))
    if isinstance(e, Binary):
        return Binary(e.op, substitute(e.left, mapping), substitute(e.right, mapping))
    return e


def _is_const(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Constant) and (value is None or e.value == value)


def simplify(e: Expr) -> Expr:
    """Constant folding plus removal of additive zeros and multiplicative ones."""
    if isinstance(e, Unary):
        child = simplify(e.child)
        if isinstance(child, Constant):
            try:
                value = _SCALAR_UNARY[e.op](child.value)
                if math.isfinite(value):
                    return Constant(value)
            except _ARITH_ERRORS:
                pass
        if e.op == "neg" and isinstance(child, Unary) and child.op == "neg":
            return child.child
        return Unary(e.op, child)
    if not isinstance(e, Binary):
        return e
    a, b = simplify(e.left), simplify(e.right)
    if isinstance(a, Constant) and isinstance(b, Constant):
        try:
            value = _SCALAR_BINARY[e.op](a.value, b.value)
            if math.isfinite(value):
                return Constant(value)
        except _ARITH_ERRORS:
            pass
    op = e.op
    if op == "add":
        if _is_const(a, 0.0):
            return b
        if _is_const(b, 0.0):
            return a
    elif op == "sub":
        if _is_const(b, 0.0):
            return a
        if _is_const(a, 0.0):
            return simplify(Unary("neg", b))
    elif op == "mul":
        if _is_const(a, 0.0) or _is_const(b, 0.0):
            return ZERO
        if _is_const(a, 1.0):
            return b
        if _is_const(b, 1.0):
            return a
        if _is_const(a, -1.0):
            return simplify(Unary("neg", b))
        if _is_const(b, -1.0):
            return simplify(Unary("neg", a))
    elif op == "div":
        if _is_const(b, 1.0):
            return a
    elif op == "pow":
        if _is_const(b, 1.0):
            return a
        if _is_const(b, 0.0):
            return ONE
    return Binary(op, a, b)


def differentiate(e: Expr, var: str) -> Expr:
    """Exact symbolic partial derivative with respect to ``x1`` or ``x2``."""
    if var not in VARIABLES:
        raise ValueError(f"can only differentiate with respect to x1 or x2, got {var!r}")
    return simplify(_d(e, var))


def _d(e: Expr, var: str) -> Expr:
    if isinstance(e, Constant) or isinstance(e, Parameter):
        return ZERO
    if isinstance(e, Variable):
        return ONE if e.name == var else ZERO
    if isinstance(e, Unary):
        g = e.child
        dg = _d(g, var)
        op = e.op
        if op == "neg":
            return Unary("neg", dg)
        if op == "sin":
            outer = Unary("cos", g)
        elif op == "cos":
            return Unary("neg", Binary("mul", dg, Unary("sin", g)))
        elif op == "sinh":
            outer = Unary("cosh", g)
        elif op == "cosh":
            outer = Unary("sinh", g)
        elif op == "tanh":
            outer = Binary("sub", ONE, Binary("pow", Unary("tanh", g), Constant(2.0)))
        elif op == "exp":
            outer = e
        elif op == "ln":
            return Binary("div", dg, g)
        elif op == "sqrt":
            return Binary("div", dg, Binary("mul", Constant(2.0), e))
        elif op == "abs":
            return Binary("mul", dg, Binary("div", g, e))
        else:  # pragma: no cover
            raise ValueError(op)
        return Binary("mul", dg, outer)
    a, b = e.left, e.right
    da, db = _d(a, var), _d(b, var)
    if e.op == "add":
        return Binary("add", da, db)
    if e.op == "sub":
        return Binary("sub", da, db)
    if e.op == "mul":
        return Binary("add", Binary("mul", da, b), Binary("mul", a, db))
    if e.op == "div":
        return Binary("div", Binary("sub", Binary("mul", da, b), Binary("mul", a, db)),
                      Binary("pow", b, Constant(2.0)))
    # power rule; general form only when the exponent varies
    if not depends_on(b, "x1") and not depends_on(b, "x2"):
        return Binary("mul", Binary("mul", b, Binary("pow", a, Binary("sub", b, ONE))), da)
    return Binary("mul", e, Binary("add", Binary("mul", db, Unary("ln", a)),
                                   Binary("div", Binary("mul", b, da), a)))


def laplacian(e: Expr) -> Expr:
    return simplify(Binary("add", differentiate(differentiate(e, "x1"), "x1"),
                           differentiate(differentiate(e, "x2"), "x2")))


def as_expr(value) -> Expr:
    """Accept an Expr, a string or a number."""
    if isinstance(value, (Constant, Variable, Parameter, Unary, Binary)):
        return value
    if isinstance(value, (int, float)):
        return Constant(float(value))
    return parse(str(value))
