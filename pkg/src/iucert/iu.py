"""The L^2 -> L^infinity iteration schedule and the constant C_t = e^{M(t)}.

Everything is parametrized by v = ln p, so that the schedule can follow p(s)
far beyond the double range.  With x = v/2 + xi(t):

    eps_t(p) = 1 / (sqrt2 d f(x)),        G(v) = int_{ln 2}^v eps_t dv',
    N(s)     = 2 int_{ln 2}^{v(s)} beta(eps_t) e^{-v} dv,    M(t) = N(t-).

The tail function F(x) = (sqrt2/d) int_x^inf f(r)^{-1} dr has a closed form;
T = F(ln2/2) and xi(t) solves F(ln2/2 + xi) = t.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from . import specialfn as sf
from .discretize import GroundState, RadialGrid, Spectrum, assemble_operator, eigenpairs, mode_log_profile
from .errors import CertificateViolation, ConvergenceError, DomainError, QuadratureError
from .io import format_csv_rows
from .numerics import adaptive_simpson, invert_increasing
from .potentials import SandwichParams
from .rosen import SQRT2, gamma_of_eps
from . import semigroup as sg

A_LO = 0.5 * math.log(2.0)  # the lower end ln(2)/2
V_LO = math.log(2.0)  # v = ln p at p = 2
N_SAMPLES = 64
P_MAX_START = 2**10
P_MAX_CAP = 2**30
TAIL_REL_TOL = 1e-6
M_GAMMA_SCALE = 2.0  # beta(eps) uses gamma(2 eps): g(1/(sqrt2 d eps_t)) = g(f(x)) = e^x
V_CAP = 200.0  # N(s) is frozen beyond this v; the remainder is below double resolution
V_LIMIT = 1e300
CERT_SLACK = 1e-6


def beta_of_eps(eps: float, n_dim: int, sandwich: SandwichParams, C_rosen: float, C_LS: float,
                gamma_scale: float = 0.5) -> float:
    """eps/2 - (n/4) ln(eps/2) + gamma(gamma_scale * eps) + C_LS."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    return (0.5 * eps - 0.25 * n_dim * math.log(0.5 * eps)
            + gamma_of_eps(sandwich, gamma_scale * eps, C_rosen) + C_LS)


# ---------------------------------------------------------------------------
# horizon T and xi(t)

def _inner_log(aux: sf.AuxParams, x: float) -> float:
    return sf.iter_log(aux.m - 1, x)


def tail_F(sandwich: SandwichParams, x: float) -> float:
    """(sqrt2/d) * int_x^inf f(r)^{-1} dr in closed form."""
    aux = sandwich.aux
    k, r0 = aux.k, aux.r0
    tail_r0 = _inner_log(aux, r0) ** (1.0 - k) / (k - 1.0)
    if x >= r0:
        val = _inner_log(aux, x) ** (1.0 - k) / (k - 1.0)
    else:
        val = r0 / aux.f_r0 * math.expm1(1.0 - x / r0) + tail_r0
    return SQRT2 / sandwich.d * val


def horizon_T_closed(sandwich: SandwichParams) -> float:
    return tail_F(sandwich, A_LO)


def horizon_T_quadrature(sandwich: SandwichParams, rel_tol: float = 1e-11,
                         log_upper: Optional[float] = None) -> float:
    """Direct quadrature of (sqrt2/d) int_{ln2/2}^{b} f^{-1}, b = exp(log_upper) (default inf).

    [ln2/2, r0] by adaptive Simpson; [r0, b) by QUADPACK on y = ln(r/r0), evaluating
    f through logarithms so r may exceed the double range.
    """
    aux = sandwich.aux
    k, m, r0 = aux.k, aux.m, aux.r0
    head = 0.0
    lo = A_LO
    if lo < r0:
        head = adaptive_simpson(lambda r: math.exp(-sf.log_f_extended(aux, r)), lo, r0, rel_tol=rel_tol)
    else:
        r0 = lo
    ln_r0 = math.log(r0)

    def tail(y):
        lr = ln_r0 + y
        return math.exp(lr - sf.log_f_km_from_log(k, m - 1, lr))

    y_hi = math.inf if log_upper is None else log_upper - ln_r0
    val, err = integrate.quad(tail, 0.0, y_hi, epsabs=0.0, epsrel=1e-12, limit=500)
    return SQRT2 / sandwich.d * (head + val)


# for m >= 3 the tail decays like 1/(y (ln y)^k) in y = ln r, too slowly for QUADPACK;
# the cross-check then covers [ln2/2, e^LOG_UPPER_CHECK] against F(ln2/2) - F(e^LOG_UPPER_CHECK)
LOG_UPPER_CHECK = 60.0


def horizon_T(sandwich: SandwichParams, cross_check: bool = True, rel_tol: float = 1e-8) -> float:
    """T = (sqrt2/d) int_{ln2/2}^inf f(r)^{-1} dr, closed form checked against quadrature."""
    T = horizon_T_closed(sandwich)
    if cross_check:
        if sandwich.m <= 2:
            Tq, ref = horizon_T_quadrature(sandwich), T
        else:
            b = max(LOG_UPPER_CHECK, 2.0 * math.log(max(sandwich.r0, 1.0)))
            Tq = horizon_T_quadrature(sandwich, log_upper=b)
            ref = T - tail_F(sandwich, math.exp(b))
        if abs(Tq - ref) > rel_tol * T:
            raise QuadratureError(f"closed-form T={T!r} disagrees with quadrature (check value {Tq!r} vs {ref!r})")
    return T


def xi_of_t(sandwich: SandwichParams, t: float, T: Optional[float] = None, rel_tol: float = 1e-12) -> float:
    """xi >= 0 with F(ln2/2 + xi) = t, by bisection on ln F."""
    if T is None:
        T = horizon_T_closed(sandwich)
    if not 0 < t <= T * (1 + 1e-15):
        raise DomainError(f"t must lie in (0, T], T={T!r}")
    if t >= T:
        return 0.0
    target = -math.log(t)
    try:
        return invert_increasing(lambda xi: -math.log(tail_F(sandwich, A_LO + xi)), target,
                                 x0=0.0, step=1.0, rel_tol=rel_tol, abs_scale=1.0, max_iter=2000)
    except (OverflowError, DomainError) as exc:
        raise ConvergenceError(f"xi({t!r}) leaves the representable range") from exc


# ---------------------------------------------------------------------------
# the schedule in v = ln p

class _Chain:
    """eps_t, beta(eps_t) and the cumulative integrals G and N for one t."""

    def __init__(self, sandwich: SandwichParams, n_dim: int, C_rosen: float, C_LS: float,
                 t: float, xi: float, gamma_scale: float = M_GAMMA_SCALE):
        self.sandwich = sandwich
        self.aux = sandwich.aux
        self.d = sandwich.d
        self.n = n_dim
        self.C_total = C_rosen + C_LS
        self.t = t
        self.xi = xi
        self.gamma_scale = gamma_scale
        self.log_sqrt2d = math.log(SQRT2 * self.d)
        self.log_c = math.log(2.0 / gamma_scale)
        vk = 2.0 * (self.aux.r0 - xi)
        self.v_kink = vk if vk > V_LO else None
        self._bp = [V_LO]
        self._G = [0.0]
        self._Nbp = [V_LO]
        self._N = [0.0]
        # g(.) e^{-xi} is only known to about ulp(xi) in relative terms
        self.quad_tol = max(1e-11, 32 * 2.220446049250313e-16 * (1.0 + abs(xi)))

    # pointwise pieces
    def x(self, v):
        return 0.5 * v + self.xi

    def log_f(self, v):
        return sf.log_f_extended(self.aux, self.x(v))

    def log_eps(self, v):
        return -self.log_sqrt2d - self.log_f(v)

    def eps(self, v):
        return math.exp(self.log_eps(v))

    def log_term(self, v):
        """-(n/4) ln(eps_t/2) = (n/4)(ln(2 sqrt2 d) + ln f(x))."""
        return 0.25 * self.n * (math.log(2.0) + self.log_sqrt2d + self.log_f(v))

    def log_g(self, v):
        # a tolerance at machine precision keeps the quadrature integrand smooth
        return sf.g_log_from_log(self.aux, self.log_c + self.log_f(v), tol=1e-15)

    def gam_scaled(self, v):
        """sqrt2 g(.) e^{-v} / e^{xi}."""
        return SQRT2 * math.exp(self.log_g(v) - self.xi - v)

    def n_integrand(self, v):
        """beta(eps_t) e^{-v}, divided by e^{xi} so that it stays finite for large xi."""
        e = math.exp(-v - self.xi)
        return (0.5 * self.eps(v) + self.log_term(v) + self.C_total) * e + self.gam_scaled(v)

    # cumulative integrals over geometric panels
    def _next_bp(self, b):
        nb = max(2.0 * b, b + 1.0)
        if self.v_kink is not None and b < self.v_kink < nb:
            nb = self.v_kink
        return nb

    def _extend(self, bps, vals, func, upto, rel_tol):
        while bps[-1] < upto:
            b = bps[-1]
            nb = self._next_bp(b)
            vals.append(vals[-1] + adaptive_simpson(func, b, nb, rel_tol=rel_tol))
            bps.append(nb)

    def G(self, v):
        if v <= V_LO:
            return 0.0
        self._extend(self._bp, self._G, self.eps, v, 1e-13)
        j = bisect.bisect_right(self._bp, v) - 1
        return self._G[j] + adaptive_simpson(self.eps, self._bp[j], v, rel_tol=1e-13)

    def G_closed(self, v):
        """t - F(x): the exact value of G, used as an oracle."""
        return self.t - tail_F(self.sandwich, self.x(v))

    def v_of_s(self, s):
        """G^{-1}(s): locate the panel from cumulative values, then bisect inside it."""
        if s == 0:
            return V_LO
        while self._G[-1] < s:
            if self._bp[-1] > V_LIMIT:
                raise ConvergenceError(f"p(s) for s={s!r} exceeds the representable range")
            self._extend(self._bp, self._G, self.eps, self._next_bp(self._bp[-1]), 1e-13)
        j = bisect.bisect_left(self._G, s) - 1
        b, base = self._bp[j], self._G[j]
        width = self._bp[j + 1] - b
        return invert_increasing(lambda v: base + adaptive_simpson(self.eps, b, v, rel_tol=1e-13) if v > b else base,
                                 s, x0=b, step=width / 64.0, rel_tol=1e-14, lower=b)

    def N_scaled(self, v):
        """N at ln p = v, divided by e^{xi} (the factor 2 included)."""
        v = min(v, V_CAP)
        if v <= V_LO:
            return 0.0
        self._extend(self._Nbp, self._N, self.n_integrand, v, self.quad_tol)
        j = bisect.bisect_right(self._Nbp, v) - 1
        return 2.0 * (self._N[j] + adaptive_simpson(self.n_integrand, self._Nbp[j], v, rel_tol=self.quad_tol))

    def N(self, v):
        """(N, ln N); N overflows to inf when e^{xi} does, ln N is None unless N > 0."""
        ns = self.N_scaled(v)
        log_N = self.xi + math.log(ns) if ns > 0 else None
        if ns == 0.0:
            return 0.0, None
        try:
            N = ns * math.exp(self.xi)
        except OverflowError:
            N = math.inf if ns > 0 else -math.inf
        return N, log_N

    def N_sweep(self, vs):
        """(N, ln N) at increasing points vs by integrating between neighbours."""
        out = []
        acc = 0.0
        prev = V_LO
        for v in vs:
            vc = min(v, V_CAP)
            if vc > prev:
                acc += _quad_pieces(self.n_integrand, _breaks(self, prev, vc), self.quad_tol)
                prev = vc
            ns = 2.0 * acc
            if ns == 0.0:
                out.append((0.0, None))
                continue
            log_N = self.xi + math.log(ns) if ns > 0 else None
            try:
                N = ns * math.exp(self.xi)
            except OverflowError:
                N = math.inf if ns > 0 else -math.inf
            out.append((N, log_N))
        return out

    def reachable(self, s):
        """False when p(s) lies beyond the double range of v."""
        try:
            return tail_F(self.sandwich, self.x(V_LIMIT)) < self.t - s
        except (OverflowError, DomainError):
            return True

    # tails of the M(t) integral beyond v = V
    def log_tail_bounds(self, V):
        """Two-sided bound on int_V^inf L(v) e^{-v} dv, L the log term."""
        n4 = 0.25 * self.n
        base = n4 * (math.log(2.0) + self.log_sqrt2d)
        aux = self.aux
        v_star = 2.0 * (aux.r0 - self.xi)
        lo = hi = 0.0
        if V < v_star:
            # affine piece: ln f = ln f(r0) + x/r0 - 1 on x < r0
            a = base + n4 * (math.log(aux.f_r0) + self.xi / aux.r0 - 1.0)
            b = n4 * 0.5 / aux.r0
            piece = (a + b * V + b) * math.exp(-V) - (a + b * v_star + b) * math.exp(-v_star)
            lo += piece
            hi += piece
            V = v_star
        L = self.log_term(V)
        dL = 0.125 * self.n * sf.dlog_f_extended(aux, self.x(V))
        lo += L * math.exp(-V)
        hi += (L + dL) * math.exp(-V)
        return lo, hi

    def gam_tail_scaled(self, V):
        """int_V^inf sqrt2 g(.) e^{-v} dv / e^{xi}."""
        if self.gamma_scale == M_GAMMA_SCALE:
            return 2.0 * SQRT2 * math.exp(-0.5 * V)
        if self.aux.m != 1:
            raise ConvergenceError("no closed tail for this gamma scale with m > 1")
        c = (2.0 / self.gamma_scale) ** (1.0 / self.aux.k)
        if c >= 2.0:
            raise ConvergenceError(f"gamma term diverges: growth rate {c:.6g} >= 2")
        if c * self.x(V) < self.aux.r0:
            raise ConvergenceError("tail starts below r0")
        return SQRT2 * math.exp((c - 1.0) * self.xi + (0.5 * c - 1.0) * V) / (1.0 - 0.5 * c)


def _breaks(chain: _Chain, a, b):
    pts = [a]
    if chain.v_kink is not None and a < chain.v_kink < b:
        pts.append(chain.v_kink)
    pts.append(b)
    return pts


def _quad_pieces(func, pts, rel_tol=1e-11):
    return sum(adaptive_simpson(func, pts[i], pts[i + 1], rel_tol=rel_tol) for i in range(len(pts) - 1))


def M_bracket(sandwich: SandwichParams, n_dim: int, C_rosen: float, C_LS: float, t: float,
              T: Optional[float] = None, gamma_scale: float = M_GAMMA_SCALE,
              rel_tol: float = TAIL_REL_TOL) -> dict:
    """M(t) = 2 int_2^inf beta(eps_t(q)) q^{-2} dq with a rigorous tail bracket.

    Quadrature covers [2, P_max]; the tails are: eps term in [0, eps_t(P)/(2P)],
    log term by its closed form below r0 and concavity above it, gamma term
    exactly (g o f = exp), constant term exactly C/2 over the whole range.
    P_max doubles from 2^10 until the bracket is below rel_tol of the partial sum.
    """
    if T is None:
        T = horizon_T_closed(sandwich)
    xi = xi_of_t(sandwich, t, T)
    ch = _Chain(sandwich, n_dim, C_rosen, C_LS, t, xi, gamma_scale)
    P = P_MAX_START
    V_prev = V_LO
    I_eps = I_log = I_gam = 0.0
    while True:
        V = math.log(P)
        pts = _breaks(ch, V_prev, V)
        I_eps += _quad_pieces(lambda v: 0.5 * ch.eps(v) * math.exp(-v), pts)
        I_log += _quad_pieces(lambda v: ch.log_term(v) * math.exp(-v), pts)
        I_gam += _quad_pieces(ch.gam_scaled, pts, ch.quad_tol)
        V_prev = V
        eps_hi = 0.5 * ch.eps(V) * math.exp(-V)
        log_lo, log_hi = ch.log_tail_bounds(V)
        gam_tail = ch.gam_tail_scaled(V)
        width = eps_hi + (log_hi - log_lo)
        # everything except the gamma part, which is carried in units of e^xi
        rest_partial = I_eps + I_log + 0.5 * ch.C_total
        partial_scale = abs(rest_partial) + abs(I_gam) * math.exp(min(xi, 700.0))
        if width <= rel_tol * partial_scale or P >= P_MAX_CAP:
            break
        P *= 2
    closed = width <= rel_tol * partial_scale
    if not closed:
        raise ConvergenceError(f"M(t) tail bracket {width:.3e} did not close by P_max=2^30")
    gam_total = I_gam + gam_tail  # times e^xi
    lower_rest = I_eps + I_log + log_lo + 0.5 * ch.C_total
    upper_rest = I_eps + eps_hi + I_log + log_hi + 0.5 * ch.C_total

    def _log_M(rest):
        # M = 2 e^xi (gam_total + rest e^{-xi}); only meaningful for M > 0
        inner = gam_total + rest * math.exp(-xi)
        return math.log(2.0) + xi + math.log(inner) if inner > 0 else None

    def _M(rest):
        try:
            return 2.0 * (math.exp(xi) * gam_total + rest)
        except OverflowError:
            return math.inf

    M_lo, M_hi = _M(lower_rest), _M(upper_rest)
    return {
        "t": t, "T": T, "xi": xi, "P_max": P, "M": M_hi, "M_lower": M_lo, "M_upper": M_hi,
        "log_M": _log_M(upper_rest),
        "components": {"eps": I_eps, "eps_tail_max": eps_hi, "log": I_log, "log_tail": [log_lo, log_hi],
                       "gamma_scaled": I_gam, "gamma_tail_scaled": gam_tail, "constant": 0.5 * ch.C_total,
                       "gamma_exact_scaled": 2.0},
        "gamma_scale": gamma_scale,
    }


def M_of_t(sandwich: SandwichParams, n_dim: int, C_rosen: float, C_LS: float, t: float,
           T: Optional[float] = None, gamma_scale: float = M_GAMMA_SCALE) -> float:
    """Upper end of the M(t) bracket."""
    return M_bracket(sandwich, n_dim, C_rosen, C_LS, t, T, gamma_scale)["M"]


def gamma_term_integral(sandwich: SandwichParams, t: float, T: Optional[float] = None,
                        tail_rel: float = 1e-12) -> dict:
    """int_2^inf g(1/(sqrt2 d eps_t(p))) p^{-2} dp by plain quadrature (no closed tail).

    The integration runs to the v where e^{-v/2} has dropped by ``tail_rel``;
    values are reported both raw and divided by e^xi.
    """
    if T is None:
        T = horizon_T_closed(sandwich)
    xi = xi_of_t(sandwich, t, T)
    ch = _Chain(sandwich, 3, 0.0, 0.0, t, xi)
    V_end = V_LO - 2.0 * math.log(tail_rel)
    scaled = _quad_pieces(lambda v: math.exp(ch.log_g(v) - xi - v), _breaks(ch, V_LO, V_end),
                          rel_tol=max(1e-10, ch.quad_tol))
    return {"xi": xi, "scaled": scaled, "value": scaled * math.exp(xi) if xi < 700 else math.inf,
            "expected_scaled": SQRT2}


# ---------------------------------------------------------------------------
# schedule objects

def sample_times(t: float, n: int = N_SAMPLES) -> np.ndarray:
    """n Chebyshev-type points on [0, t), clustered toward t."""
    j = np.arange(n)
    return t * np.sin(np.pi * j / (2.0 * n)) ** 2


@dataclass
class IUSchedule:
    sandwich: SandwichParams
    n_dim: int
    C_rosen: float
    C_LS: float
    t: float
    T: float
    t_reduced: float
    k_steps: int
    xi: float
    M: float
    M_lower: float
    log_M: Optional[float]
    samples: list
    P_max: float
    gamma_scale: float
    notes: list = field(default_factory=list)

    @property
    def log_C_t(self) -> float:
        return self.M

    @property
    def C_t(self) -> float:
        try:
            return math.exp(self.M)
        except OverflowError:
            return math.inf

    def to_dict(self) -> dict:
        return {
            "sandwich": self.sandwich.to_dict(), "n_dim": self.n_dim, "C_rosen": self.C_rosen,
            "C_LS": self.C_LS, "t": self.t, "T": self.T, "t_reduced": self.t_reduced,
            "k_steps": self.k_steps, "xi": self.xi, "M": self.M, "M_lower": self.M_lower,
            "log_M": self.log_M, "C_t": self.C_t, "log_C_t": self.M, "P_max": self.P_max,
            "gamma_scale": self.gamma_scale, "samples": self.samples, "notes": self.notes,
        }

    def samples_csv(self) -> str:
        nan = math.nan
        rows = [tuple(nan if r[k] is None else r[k] for k in ("s", "p", "log_p", "eps", "N", "log_N"))
                for r in self.samples]
        return format_csv_rows(["s", "p", "log_p", "eps", "N", "log_N"], rows)


def reduce_time(t: float, T: float):
    """(t - kT, k) with kT < t <= (k+1)T, k = ceil(t/T) - 1."""
    if not t > 0:
        raise DomainError("t must be positive")
    if t <= T:
        return t, 0
    k = math.ceil(t / T) - 1
    tr = t - k * T
    if tr <= 0:  # rounding at exact multiples
        k -= 1
        tr = t - k * T
    return min(tr, T), k


def schedule_at(sandwich: SandwichParams, t: float, s: float, n_dim: int = 3, C_rosen: float = 0.0,
                C_LS: float = 0.0, T: Optional[float] = None, _chain: Optional[_Chain] = None):
    """(p(s), eps_t(p(s)), N(s)) for 0 <= s < t <= T; p may overflow to inf."""
    if not 0 <= s < t:
        raise DomainError("need 0 <= s < t")
    if _chain is None:
        if T is None:
            T = horizon_T_closed(sandwich)
        _chain = _Chain(sandwich, n_dim, C_rosen, C_LS, t, xi_of_t(sandwich, t, T))
    v = _chain.v_of_s(s)
    p = 2.0 if s == 0 else (math.exp(v) if v < 709.0 else math.inf)
    return p, _chain.eps(v), _chain.N(v)[0]


def build_schedule(sandwich: SandwichParams, n_dim: int, C_rosen: float, C_LS: float, t: float,
                   n_samples: int = N_SAMPLES, T: Optional[float] = None,
                   gamma_scale: float = M_GAMMA_SCALE) -> IUSchedule:
    if T is None:
        T = horizon_T(sandwich)
    tr, k = reduce_time(t, T)
    mb = M_bracket(sandwich, n_dim, C_rosen, C_LS, tr, T, gamma_scale)
    xi = mb["xi"]
    ch = _Chain(sandwich, n_dim, C_rosen, C_LS, tr, xi, gamma_scale)
    notes = []
    if k:
        notes.append(f"t > T: constant taken at t - {k}T")
    samples = []
    for s in sample_times(tr, n_samples):
        s = float(s)
        if not ch.reachable(s):
            samples.append({"s": s, "p": None, "log_p": None, "eps": None, "N": None, "log_N": None,
                            "representable": False})
            continue
        v = ch.v_of_s(s)
        samples.append({"s": s, "p": 2.0 if s == 0 else (math.exp(v) if v < 709 else math.inf),
                        "log_p": v, "eps": ch.eps(v), "representable": True})
    good = [r for r in samples if r["representable"]]
    for r, (N, log_N) in zip(good, ch.N_sweep([r["log_p"] for r in good])):
        r["N"], r["log_N"] = N, log_N
    if any(not r["representable"] for r in samples):
        notes.append("some samples need ln p beyond 1e300 and are left empty")
    if any(r["log_p"] is not None and r["log_p"] > V_CAP for r in samples):
        notes.append(f"N(s) is frozen at ln p = {V_CAP:g}; the remaining integral is below double resolution")
    return IUSchedule(sandwich=sandwich, n_dim=n_dim, C_rosen=C_rosen, C_LS=C_LS, t=t, T=T, t_reduced=tr,
                      k_steps=k, xi=xi, M=mb["M"], M_lower=mb["M_lower"], log_M=mb["log_M"], samples=samples,
                      P_max=mb["P_max"], gamma_scale=gamma_scale, notes=notes)


def iu_log_constant(sandwich: SandwichParams, n_dim: int, C_rosen: float, C_LS: float, t: float,
                    T: Optional[float] = None) -> float:
    """ln C_t = M(t - kT)."""
    if T is None:
        T = horizon_T_closed(sandwich)
    tr, _ = reduce_time(t, T)
    return M_of_t(sandwich, n_dim, C_rosen, C_LS, tr, T)


def iu_constant(sandwich: SandwichParams, n_dim: int, C_rosen: float, C_LS: float, t: float,
                T: Optional[float] = None) -> float:
    try:
        return math.exp(iu_log_constant(sandwich, n_dim, C_rosen, C_LS, t, T))
    except OverflowError:
        return math.inf


# ---------------------------------------------------------------------------
# certification against the numerical semigroup

def _l2_norm(grid: RadialGrid, v) -> float:
    return float(np.sqrt(np.sum(np.abs(v) ** 2 * grid.weights)))


def _log_sup_ratio(gs: GroundState, out) -> float:
    with np.errstate(divide="ignore"):
        return float(np.max(np.log(np.abs(out)) - np.log(gs.phi)))


def iu_certificate(gs: GroundState, spectrum: Spectrum, log_C_t: float, t: float, test_functions,
                   method: str = "expm", kernel: bool = True, raise_on_violation: bool = True) -> dict:
    """Compare sup |e^{-tH} v| / (phi ||v||_2) and sup k/(phi x phi) with C_t = e^{log_C_t}.

    ``test_functions`` is a list of arrays or of (name, array) pairs.  Signed
    inputs are also bounded through v = v+ - v-, complex ones through the
    real/imaginary split; each part obeys the bound with its own norm.
    """
    grid = gs.grid
    tol = math.log1p(CERT_SLACK)
    rows = []
    worst = -math.inf
    for idx, item in enumerate(test_functions):
        name, v = item if isinstance(item, tuple) else (f"v{idx}", item)
        v = np.asarray(v)
        nv = _l2_norm(grid, v)
        out, log_scale = sg.propagate_scaled(spectrum, v, t, method)
        lr = log_scale + _log_sup_ratio(gs, out) - math.log(nv)
        row = {"name": name, "log_ratio": lr, "ratio": math.exp(lr) if lr < 709 else math.inf,
               "ok": lr <= log_C_t + tol}
        parts = []
        if np.iscomplexobj(v):
            parts = [np.real(v), np.imag(v)]
        elif np.any(v < 0) and np.any(v > 0):
            parts = [np.maximum(v, 0.0), np.maximum(-v, 0.0)]
        if parts:
            # |e^{-tH} v| <= sum over parts, each part bounded by C_t phi ||part||
            outs = [np.abs(sg.propagate_scaled(spectrum, pv, t, method)[0]) for pv in parts if np.any(pv != 0)]
            norms = [_l2_norm(grid, pv) for pv in parts if np.any(pv != 0)]
            part_lr = [log_scale + _log_sup_ratio(gs, o) - math.log(nm) for o, nm in zip(outs, norms)]
            pointwise = bool(np.all(np.abs(out) <= sum(outs) * (1 + 1e-12) + 1e-300))
            row["split"] = {"part_log_ratios": part_lr, "norm_sum_over_norm": sum(norms) / nv,
                            "triangle_holds": pointwise,
                            "ok": pointwise and max(part_lr) <= log_C_t + tol}
            row["ok"] = row["ok"] and row["split"]["ok"]
        worst = max(worst, lr)
        rows.append(row)
    report = {"t": t, "log_C_t": log_C_t, "C_t": math.exp(log_C_t) if log_C_t < 709 else math.inf,
              "E0": gs.E0, "method": method, "functions": rows, "worst_log_ratio": worst,
              "log_slack": log_C_t - worst}
    ok = all(r["ok"] for r in rows)
    if kernel:
        K = sg.heat_kernel(spectrum, t, method=method)
        lk = sg.log_kernel_iu_ratio(gs, K)
        report["kernel_log_ratio"] = lk
        report["kernel_ratio"] = math.exp(lk) if lk < 709 else math.inf
        report["kernel_ok"] = lk <= log_C_t + tol
        ok = ok and report["kernel_ok"]
    report["ok"] = ok
    if not ok and raise_on_violation:
        raise CertificateViolation(f"observed ratio exceeds C_t at t={t}")
    return report


# ---------------------------------------------------------------------------
# negative control

def _radial_q(kind):
    if callable(kind):
        return kind
    if kind == "harmonic":
        return lambda r: r**2
    if kind == "quartic":
        return lambda r: r**4
    raise ValueError(f"unknown potential {kind!r}")


def mode_ratio(op, mode_index: int) -> dict:
    """sup_r |v_m(r)| / phi(r) from relative-accurate recurrence profiles."""
    sp = eigenpairs(op, K=mode_index + 1)
    lam0, lam = float(sp.eigenvalues[0]), float(sp.eigenvalues[mode_index])
    l0, _ = mode_log_profile(op, lam0)
    lm, _ = mode_log_profile(op, lam)
    diff = lm - l0
    i = int(np.argmax(diff))
    return {"log_ratio": float(diff[i]), "ratio": float(math.exp(diff[i])), "argmax_r": float(op.grid.nodes[i]),
            "eigenvalue": lam, "E0": lam0}


def negative_control(R_list: Sequence[float] = (6.0, 9.0, 12.0), mode_index: int = 1,
                     potential="harmonic", n_dim: int = 3, spacing: float = 0.005) -> dict:
    """Eigenfunction / ground-state sup-ratio on grids of growing R_max.

    For q = r^2 the ratio is a polynomial in r and keeps growing; for an IU
    potential such as r^4 it settles to a constant.
    """
    if mode_index < 0:
        raise DomainError("mode_index must be >= 0")
    q = _radial_q(potential)
    rows = []
    for R in R_list:
        N = int(round(R / spacing)) - 1
        grid = RadialGrid(n_dim, float(R), N)
        op = assemble_operator(grid, q(grid.nodes))
        if mode_index == 0:
            row = {"R_max": float(R), "ratio": 1.0, "log_ratio": 0.0}
        else:
            mr = mode_ratio(op, mode_index)
            row = {"R_max": float(R), **mr}
        rows.append(row)
    ratios = [r["ratio"] for r in rows]
    increasing = all(b > a for a, b in zip(ratios, ratios[1:]))
    growth = ratios[-1] / ratios[0]
    variation = (max(ratios) - min(ratios)) / min(ratios)
    return {"potential": potential if isinstance(potential, str) else "custom", "mode_index": mode_index,
            "rows": rows, "strictly_increasing": increasing, "growth": growth,
            "unbounded_trend": bool(increasing and growth > 10.0), "relative_variation": variation,
            "saturating": bool(variation < 0.10)}
