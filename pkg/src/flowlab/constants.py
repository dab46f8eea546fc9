"""Explicit growth constants C1(eta), C2(eta), C_eta and partition integers.

Each constant is a supremum over a half line of a function that tends to a
finite limit.  The supremum is bracketed on a coarse logarithmic grid,
polished by golden-section search in log t, and then compared with the
left endpoint and the analytic limit at infinity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
T_MAX = 1e12


def _check_eta(eta: float) -> None:
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"eta must lie in (0, 1], got {eta!r}")


def h1(t, eta: float):
    """Dyadic-partition growth ratio; sup over t >= 1 is C1."""
    t = np.asarray(t, dtype=float)
    return 288 * np.pi * eta**-2 * (np.log2(t) + math.log2(eta**-4) + 2) / np.log(3 + t)


def h2(t, eta: float):
    """Geometric-partition growth ratio with ratio 1 + eta^2/2; sup enters C2."""
    t = np.asarray(t, dtype=float)
    omega = eta * eta / 2
    levels = (np.log(t) + math.log(4 * eta**-2)) / math.log1p(omega)
    return 384 * np.pi * (levels + 1) / np.log(3 + t)


def h1_limit(eta: float) -> float:
    return 288 * math.pi * eta**-2 / math.log(2)


def h2_limit(eta: float) -> float:
    return 384 * math.pi / math.log1p(eta * eta / 2)


def c2_floor(eta: float) -> float:
    return 288 * math.pi * (2 * eta**-4 + 1)


@dataclass(frozen=True)
class Supremum:
    value: float
    argmax: float  # math.inf when the supremum is the limit at infinity
    bracket: float  # relative width in t of the final golden-section bracket
    interior: float  # best value found by the search itself


def golden_max(fn: Callable[[float], float], a: float, b: float, tol: float = 1e-12) -> tuple[float, float, float]:
    """Maximize a unimodal ``fn`` on [a, b]; returns (x, fn(x), final width)."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol * max(1.0, abs(a) + abs(b)):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fn(d)
    x = c if fc >= fd else d
    return x, max(fc, fd), b - a


def sup_on_halfline(fn, start: float, limit: float, t_max: float = T_MAX, coarse: int = 400) -> Supremum:
    """sup of ``fn`` over [start, inf) given its limit at infinity."""
    logs = np.linspace(math.log(start), math.log(t_max), coarse)
    vals = np.asarray(fn(np.exp(logs)), dtype=float)
    k = int(np.argmax(vals))
    lo, hi = logs[max(k - 1, 0)], logs[min(k + 1, coarse - 1)]
    g = lambda s: float(fn(math.exp(s)))
    s_best, v_best, width = golden_max(g, lo, hi)
    candidates = [(v_best, math.exp(s_best)), (float(fn(start)), start), (limit, math.inf)]
    value, arg = max(candidates, key=lambda c: c[0])
    return Supremum(value, arg, math.expm1(width), v_best)


@dataclass(frozen=True)
class ConstantsReport:
    eta: float
    omega: float
    C1: float
    C2: float
    C_eta: float
    argmax_C1: float
    argmax_C2: float
    argmax_C_eta: float
    h1_limit: float
    h2_limit: float
    h2_sup: float
    c2_floor: float
    N: int
    bracket: float

    def inequalities(self) -> dict[str, bool]:
        eta = self.eta
        return {
            "C1 >= 288 pi eta^-2 / ln 2": self.C1 >= h1_limit(eta),
            "C1 > 96 pi eta^-2": self.C1 > 96 * math.pi * eta**-2,
            "C2 >= 384 pi / ln(1 + omega)": self.C2 >= h2_limit(eta),
            "C2 >= 288 pi (2 eta^-4 + 1)": self.C2 >= c2_floor(eta),
            "384 pi / ln(1 + omega) > 192 pi": h2_limit(eta) > 192 * math.pi,
            "omega in (0, 1/2]": 0.0 < self.omega <= 0.5,
        }


def c_eta_ratio(rho, eta: float, C1: float, C2: float):
    rho = np.asarray(rho, dtype=float)
    return (C2 * np.log(3 + rho + rho * eta**-2) + C1 * np.log(3 + rho * eta**-2)) / np.log(rho)


def constants(eta: float) -> ConstantsReport:
    _check_eta(eta)
    s1 = sup_on_halfline(lambda t: h1(t, eta), 1.0, h1_limit(eta))
    s2 = sup_on_halfline(lambda t: h2(t, eta), 1.0, h2_limit(eta))
    C1 = s1.value
    C2 = max(s2.value, c2_floor(eta))
    s3 = sup_on_halfline(lambda r: c_eta_ratio(r, eta, C1, C2), 2.0, C1 + C2)
    return ConstantsReport(
        eta=eta, omega=eta * eta / 2, C1=C1, C2=C2, C_eta=2 * s3.value,
        argmax_C1=s1.argmax, argmax_C2=s2.argmax, argmax_C_eta=s3.argmax,
        h1_limit=h1_limit(eta), h2_limit=h2_limit(eta), h2_sup=s2.value, c2_floor=c2_floor(eta),
        N=math.floor(2 * eta**-4 + 1), bracket=max(s1.bracket, s2.bracket, s3.bracket),
    )


@dataclass(frozen=True)
class PartitionParams:
    d: float
    eta: float
    m_dyadic: int
    m_geometric: int
    N: int
    dyadic_tail: float
    geometric_tail: float

    @property
    def dyadic_ok(self) -> bool:
        return self.dyadic_tail < self.eta**4

    @property
    def geometric_ok(self) -> bool:
        return self.geometric_tail < self.eta**2 / 4


def partition_params(d: float, eta: float) -> PartitionParams:
    """Sub-segment counts for splitting a chord of length d >= 1."""
    _check_eta(eta)
    if not d >= 1.0:
        raise ValueError(f"chord length must be at least 1, got {d!r}")
    omega = eta * eta / 2
    m_dyadic = math.floor(math.log2(d) + math.log2(eta**-4)) + 2
    m_geo = math.floor(math.log(4 * d * eta**-2) / math.log1p(omega)) + 2
    return PartitionParams(
        d=d, eta=eta, m_dyadic=m_dyadic, m_geometric=m_geo,
        N=math.floor(2 * eta**-4 + 1),
        dyadic_tail=2.0 ** (1 - m_dyadic) * d,
        geometric_tail=(1 + omega) ** (-(m_geo - 1)) * d,
    )
