"""Iterated logarithms, the growth functions f_{k,m}, their extension and inverse.

Notation: ln^(p) is the p-fold natural logarithm, and

    f_{k,m}(t) = (ln^(m) t)^k * prod_{p=0}^{m-1} ln^(p) t .

The extended function f (built from AuxParams) equals f_{k,m-1} on [r0, inf) and
continues as f_{k,m-1}(r0) * exp(q/r0 - 1) below r0.  g is the inverse of f o ln.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError
from .numerics import invert_increasing

G_TOL = 1e-12
G_MAX_ITER = 200


def iter_log(p: int, t: float) -> float:
    """Apply the natural log p times.  ``iter_log(0, t) == t``."""
    if p < 0:
        raise DomainError("iteration count must be non-negative")
    x = float(t)
    for _ in range(p):
        if not x > 0.0:
            raise DomainError(f"iterated log undefined: intermediate value {x!r} <= 0")
        x = math.log(x)
    return x


def f_km(k: float, m: int, t: float) -> float:
    """(ln^(m) t)^k times the product of ln^(p) t for p < m."""
    inner = iter_log(m, t)
    if not inner > 0.0:
        raise DomainError(f"f_{{k,m}} needs ln^({m})(t) > 0, got {inner!r}")
    prod = 1.0
    x = float(t)
    for _ in range(m):
        prod *= x
        x = math.log(x)
    return inner**k * prod


def log_f_km(k: float, m: int, t: float) -> float:
    """ln f_{k,m}(t), evaluated without forming f (safe for huge t)."""
    inner = iter_log(m, t)
    if not inner > 0.0:
        raise DomainError(f"f_{{k,m}} needs ln^({m})(t) > 0, got {inner!r}")
    total = k * math.log(inner)
    x = float(t)
    for _ in range(m):
        total += math.log(x)
        x = math.log(x)
    return total


def log_f_km_from_log(k: float, m: int, log_t: float) -> float:
    """ln f_{k,m}(t) given ln t, for t beyond the double range (m >= 1)."""
    if m < 1:
        return k * log_t
    total = log_t  # ln of the p = 0 factor
    x = log_t  # ln^(1) t
    for _ in range(m - 1):
        if not x > 0.0:
            raise DomainError("iterated log undefined")
        total += math.log(x)
        x = math.log(x)
    if not x > 0.0:
        raise DomainError(f"f_{{k,m}} needs ln^({m})(t) > 0")
    return total + k * math.log(x)


def dlog_f_km(k: float, m: int, t: float) -> float:
    """d/dt ln f_{k,m}(t) = k/prod_{j<=m} L_j + sum_{p<m} 1/prod_{j<=p} L_j, L_j = ln^(j) t."""
    prod = 1.0
    total = 0.0
    x = float(t)
    for _ in range(m):
        prod *= x
        total += 1.0 / prod
        x = math.log(x)
    return total + k / (prod * x)


@dataclass(frozen=True)
class AuxParams:
    """Parameters (k, m, r0) of the extended growth function f."""

    k: float
    m: int
    r0: float

    def __post_init__(self):
        if not self.k > 1.0:
            raise DomainError(f"k must exceed 1, got {self.k}")
        if int(self.m) != self.m or self.m < 1:
            raise DomainError(f"m must be an integer >= 1, got {self.m}")
        if not self.r0 > 0.0:
            raise DomainError(f"r0 must be positive, got {self.r0}")
        if not iter_log(self.m - 1, self.r0) > 0.0:
            raise DomainError("f_{k,m-1} is not positive at r0")

    @property
    def f_r0(self) -> float:
        return f_km(self.k, self.m - 1, self.r0)


def f_extended(params: AuxParams, q: float) -> float:
    """The extended growth function f(q), strictly increasing on the real line."""
    if q >= params.r0:
        return f_km(params.k, params.m - 1, q)
    return params.f_r0 * math.exp(q / params.r0 - 1.0)


def log_f_extended(params: AuxParams, q: float) -> float:
    if q >= params.r0:
        return log_f_km(params.k, params.m - 1, q)
    return math.log(params.f_r0) + q / params.r0 - 1.0


def dlog_f_extended(params: AuxParams, q: float) -> float:
    """Derivative of ln f; piecewise, right-continuous at r0."""
    if q >= params.r0:
        return dlog_f_km(params.k, params.m - 1, q)
    return 1.0 / params.r0


def f_extended_array(params: AuxParams, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    out = np.empty_like(q)
    flat_q, flat_o = q.ravel(), out.ravel()
    for i, v in enumerate(flat_q):
        flat_o[i] = f_extended(params, float(v))
    return out


def g_log(params: AuxParams, y: float, tol: float = G_TOL, max_iter: int = G_MAX_ITER) -> float:
    """ln g(y), i.e. the unique r with f(r) = y.

    Working with r = ln x keeps g usable when x itself would overflow.  The
    bracket starts at r = 0 (x = 1) and grows geometrically; bisection runs on
    ln f - ln y, so |ln f(r) - ln y| <= tol/2 gives |f(r) - y| <= tol*y.
    """
    if not y > 0.0:
        raise DomainError(f"g is defined for y > 0, got {y!r}")
    return g_log_from_log(params, math.log(y), tol, max_iter)


def g_log_from_log(params: AuxParams, ly: float, tol: float = G_TOL, max_iter: int = G_MAX_ITER) -> float:
    """ln g(e^ly); lets the argument of g exceed the double range."""
    try:
        return invert_increasing(
            lambda s: log_f_extended(params, s) - ly, 0.0,
            x0=0.0, step=1.0, rel_tol=0.5 * tol, max_iter=max_iter, abs_scale=1.0,
        )
    except ConvergenceError as exc:
        raise ConvergenceError(f"g(exp({ly!r})): {exc}") from exc


def g_inverse(params: AuxParams, y: float, tol: float = G_TOL, max_iter: int = G_MAX_ITER) -> float:
    """Inverse of f o ln: returns x > 0 with f(ln x) = y (may overflow to inf)."""
    r = g_log(params, y, tol, max_iter)
    try:
        return math.exp(r)
    except OverflowError:
        return math.inf


def young_bound(params: AuxParams, a: float, b: float, tol: float = G_TOL) -> float:
    """a f(ln a) + b g(b), which dominates a*b (Young's inequality)."""
    if not (a > 0.0 and b > 0.0):
        raise DomainError("young_bound needs a, b > 0")
    return a * f_extended(params, math.log(a)) + b * g_inverse(params, b, tol)
