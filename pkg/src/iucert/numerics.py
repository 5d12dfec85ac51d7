"""Small numerical kernels: adaptive Simpson quadrature and monotone inversion."""
from __future__ import annotations

import math
from typing import Callable

from scipy import optimize

from .errors import ConvergenceError, QuadratureError

DEFAULT_REL_TOL = 1e-10
DEFAULT_MAX_DEPTH = 40
_EPS = 2.220446049250313e-16


def _simpson(fa, fm, fb, a, b):
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def adaptive_simpson(
    func: Callable[[float], float],
    a: float,
    b: float,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = 0.0,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> float:
    """Integrate ``func`` over [a, b] by adaptive Simpson with Richardson correction.

    The local acceptance test is |S_left + S_right - S_whole| <= 15 * eps, where eps
    starts at max(abs_tol, rel_tol * |I0|) for a coarse estimate I0 and is halved
    on each bisection.  Raises QuadratureError if a panel at ``max_depth`` still
    fails the test.
    """
    if a == b:
        return 0.0
    if b < a:
        return -adaptive_simpson(func, b, a, rel_tol, abs_tol, max_depth)

    # coarse estimate on 8 panels to fix the error scale
    xs = [a + (b - a) * i / 16.0 for i in range(17)]
    fs = [func(x) for x in xs]
    coarse = sum(_simpson(fs[2 * i], fs[2 * i + 1], fs[2 * i + 2], xs[2 * i], xs[2 * i + 2]) for i in range(8))
    eps = max(abs_tol, rel_tol * abs(coarse))
    if eps == 0.0:
        eps = rel_tol * max(abs(v) for v in fs) * (b - a) or 1e-300

    total = 0.0
    # explicit stack: (a, m, b, fa, fm, fb, whole, eps, depth)
    stack = []
    for i in range(8):
        x0, x1, x2 = xs[2 * i], xs[2 * i + 1], xs[2 * i + 2]
        f0, f1, f2 = fs[2 * i], fs[2 * i + 1], fs[2 * i + 2]
        stack.append((x0, x1, x2, f0, f1, f2, _simpson(f0, f1, f2, x0, x2), eps / 8.0, 3))
    while stack:
        lo, mid, hi, flo, fmid, fhi, whole, tol, depth = stack.pop()
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        flm = func(lm)
        frm = func(rm)
        left = _simpson(flo, flm, fmid, lo, mid)
        right = _simpson(fmid, frm, fhi, mid, hi)
        delta = left + right - whole
        if not math.isfinite(delta):
            raise QuadratureError(f"non-finite integrand on [{lo}, {hi}]")
        if abs(delta) <= 15.0 * tol:
            total += left + right + delta / 15.0
        elif depth >= max_depth:
            raise QuadratureError(
                f"adaptive Simpson missed tolerance at depth {depth} on [{lo:.6g}, {hi:.6g}]"
            )
        else:
            stack.append((lo, lm, mid, flo, flm, fmid, left, 0.5 * tol, depth + 1))
            stack.append((mid, rm, hi, fmid, frm, fhi, right, 0.5 * tol, depth + 1))
    return total


def invert_increasing(
    func: Callable[[float], float],
    target: float,
    x0: float = 0.0,
    step: float = 1.0,
    rel_tol: float = 1e-12,
    max_iter: int = 200,
    lower: float | None = None,
    abs_scale: float | None = None,
) -> float:
    """Solve func(x) = target for strictly increasing, continuous ``func``.

    The bracket grows geometrically from ``x0`` (step doubling) and is then
    refined by Brent's method, with bisection as a fallback, until
    |func(x) - target| <= rel_tol * |target| or the bracket
    collapses to adjacent floats.  ``lower`` pins the left end of the search;
    ``abs_scale`` replaces |target| in the stopping rule.
    """
    it = 0
    fx0 = func(x0)
    if fx0 == target:
        return x0
    if fx0 < target:
        lo, hi, s = x0, x0 + step, step
        while func(hi) < target:
            lo = hi
            s *= 2.0
            hi = x0 + s
            it += 1
            if it >= max_iter or not math.isfinite(hi):
                raise ConvergenceError(f"cannot bracket target {target!r} from above")
    else:
        if lower is not None:
            lo, hi = lower, x0
            if func(lo) > target:
                raise ConvergenceError(f"target {target!r} lies below func(lower)")
        else:
            hi, lo, s = x0, x0 - step, step
            while func(lo) > target:
                hi = lo
                s *= 2.0
                lo = x0 - s
                it += 1
                if it >= max_iter or not math.isfinite(lo):
                    raise ConvergenceError(f"cannot bracket target {target!r} from below")
    if abs_scale is not None:
        scale = abs_scale
    else:
        scale = abs(target) if target != 0 else 1.0
    # Brent's method on the bracket; plain bisection takes over if its root
    # misses the residual test (possible when func is only piecewise smooth)
    flo, fhi = func(lo) - target, func(hi) - target
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    try:
        x = optimize.brentq(lambda z: func(z) - target, lo, hi, xtol=1e-300, rtol=4 * _EPS,
                            maxiter=max_iter)
        if abs(func(x) - target) <= rel_tol * scale:
            return x
    except (RuntimeError, ValueError):
        pass
    while it < max_iter:
        mid = 0.5 * (lo + hi)
        fm = func(mid)
        if abs(fm - target) <= rel_tol * scale:
            return mid
        if mid <= lo or mid >= hi:
            return mid
        if fm < target:
            lo = mid
        else:
            hi = mid
        it += 1
    raise ConvergenceError(f"bisection did not reach rel_tol={rel_tol} in {max_iter} steps")
