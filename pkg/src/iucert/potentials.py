"""Radial bounding potentials Q, the integral A(r) = int_0^r Q^(1/2), and growth checks.

Built-in families (all radial, r = |x|):

    PowerAlpha       Q(r) = r^alpha
    LogPower         Q(r) = r^2 (ln r)^alpha
    LogLogPower      Q(r) = r^2 (ln r)^2 (ln ln r)^alpha
    GeneralIterated  Q(r) = (ln^(l) r)^alpha * prod_{p<l} (ln^(p) r)^2
    Tabulated        monotone cubic interpolant of sampled (r, Q) pairs

The log families live above a floor exp^(l)(1) (e, e^e, ...).  Below it they are
continued by the quadratic Q(floor) (r/floor)^2, which is continuous at the floor.

Large radii are handled in log coordinates u = ln r so that the growth
conditions can be sampled far beyond the range of a double.
"""
from __future__ import annotations

import csv
import enum
import math
import threading
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import specialfn as sf
from .errors import DomainError, InvalidPotential, NotSatisfiable
from .numerics import adaptive_simpson

QUAD_TOL = 1e-10
N_SAMPLES = 4096
TAIL_FRACTION = 0.10


class Family(str, enum.Enum):
    POWER = "PowerAlpha"
    LOG = "LogPower"
    LOGLOG = "LogLogPower"
    ITERATED = "GeneralIterated"
    TABULATED = "Tabulated"


_DEPTH = {Family.POWER: 0, Family.LOG: 1, Family.LOGLOG: 2}


def family_floor(l: int) -> float:
    """exp applied l times to 1: 0 for l = 0, then e, e^e, ..."""
    if l == 0:
        return 0.0
    x = 1.0
    for _ in range(l):
        x = math.exp(x)
    return x


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    family: Family
    alpha: Optional[float] = None
    l: int = 0
    table: Optional[tuple] = None  # (r array, Q array) for Tabulated
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        if fam == Family.TABULATED:
            if self.table is None:
                raise InvalidPotential("Tabulated potential needs a table")
            r, q = (np.asarray(a, dtype=float) for a in self.table)
            if r.ndim != 1 or r.shape != q.shape or r.size < 4:
                raise InvalidPotential("table must hold >= 4 (r, Q) pairs")
            if np.any(np.diff(r) <= 0):
                raise InvalidPotential("table radii must be strictly increasing")
            if np.any(q <= 0) and not (q[0] == 0 and r[0] == 0 and np.all(q[1:] > 0)):
                raise InvalidPotential("tabulated Q must be positive")
            object.__setattr__(self, "table", (r, q))
            object.__setattr__(self, "_interp", PchipInterpolator(r, q, extrapolate=False))
            return
        if self.alpha is None:
            raise InvalidPotential(f"{fam.value} needs alpha")
        if fam in _DEPTH:
            object.__setattr__(self, "l", _DEPTH[fam])
        elif self.l < 0:
            raise InvalidPotential("iteration depth l must be >= 0")

    # -- constructors -----------------------------------------------------
    @classmethod
    def power(cls, alpha):
        return cls(Family.POWER, alpha=float(alpha))

    @classmethod
    def log_power(cls, alpha):
        return cls(Family.LOG, alpha=float(alpha))

    @classmethod
    def loglog_power(cls, alpha):
        return cls(Family.LOGLOG, alpha=float(alpha))

    @classmethod
    def iterated(cls, alpha, l):
        return cls(Family.ITERATED, alpha=float(alpha), l=int(l))

    @classmethod
    def from_csv(cls, path):
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    continue  # header
        arr = np.array(rows, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 4:
            raise InvalidPotential(f"{path}: need at least 4 numeric rows")
        return cls(Family.TABULATED, table=(arr[:, 0], arr[:, 1]))

    # -- metadata ---------------------------------------------------------
    @property
    def floor(self) -> float:
        if self.family == Family.TABULATED:
            return float(self.table[0][0])
        return family_floor(self.l)

    @property
    def r_table_max(self) -> float:
        return float(self.table[0][-1]) if self.family == Family.TABULATED else math.inf

    def describe(self) -> dict:
        out = {"family": self.family.value}
        if self.family == Family.TABULATED:
            out["table_points"] = int(self.table[0].size)
        else:
            out["alpha"] = self.alpha
            out["l"] = self.l
        return out

    # -- closed-form pieces ------------------------------------------------
    def _q_closed(self, r: float):
        """Q and Q'/Q above the floor (r > 0)."""
        a, l = self.alpha, self.l
        logs = [r]
        for _ in range(l):
            logs.append(math.log(logs[-1]))
        q = logs[l] ** a
        for p in range(l):
            q *= logs[p] ** 2
        # Q'/Q = alpha/prod_{j<=l} L_j + 2 sum_{p<l} 1/prod_{j<=p} L_j
        prod = 1.0
        dlog = 0.0
        for p in range(l):
            prod *= logs[p]
            dlog += 2.0 / prod
        prod *= logs[l]
        dlog += a / prod
        return q, dlog


def _tab_eval(spec: PotentialSpec, r: float):
    r_tab = spec.table[0]
    if r < r_tab[0] or r > r_tab[-1]:
        raise DomainError(f"r={r} outside table range [{r_tab[0]}, {r_tab[-1]}]")
    q = float(spec._interp(r))
    # centred difference, one-sided at the table ends
    h = 1e-6 * max(1.0, abs(r))
    lo, hi = max(r - h, r_tab[0]), min(r + h, r_tab[-1])
    dq = (float(spec._interp(hi)) - float(spec._interp(lo))) / (hi - lo)
    return q, dq


def eval_Q(spec: PotentialSpec, r: float):
    """Return (Q(r), Q'(r))."""
    r = float(r)
    if r < 0:
        raise DomainError("radius must be non-negative")
    if spec.family == Family.TABULATED:
        return _tab_eval(spec, r)
    if spec.l == 0:
        a = spec.alpha
        if r == 0.0:
            return 0.0, (0.0 if a > 1 else math.inf)
        q = r**a
        return q, a * q / r
    fl = spec.floor
    if r < fl:
        qf, _ = spec._q_closed(fl)
        return qf * (r / fl) ** 2, 2.0 * qf * r / fl**2
    q, dlog = spec._q_closed(r)
    return q, q * dlog


def Q_array(spec: PotentialSpec, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return np.array([eval_Q(spec, float(x))[0] for x in r.ravel()]).reshape(r.shape)


def log_Q(spec: PotentialSpec, u: float):
    """(ln Q, ln(Q'/Q)) at r = e^u, computed without forming r."""
    if spec.family == Family.TABULATED:
        r = math.exp(u)
        q, dq = _tab_eval(spec, r)
        if q <= 0 or dq <= 0:
            return math.log(q) if q > 0 else -math.inf, -math.inf
        return math.log(q), math.log(dq / q)
    a, l = spec.alpha, spec.l
    if l == 0:
        return a * u, math.log(a) - u
    fl = spec.floor
    if u < math.log(fl):
        qf, _ = spec._q_closed(fl)
        return math.log(qf) + 2.0 * (u - math.log(fl)), math.log(2.0) - u
    # L_0 = e^u, L_1 = u, L_p = ln^(p-1) u
    logs = [None, u]
    for _ in range(2, l + 1):
        logs.append(math.log(logs[-1]))
    lnq = a * math.log(logs[l]) + 2.0 * u
    for p in range(1, l):
        lnq += 2.0 * math.log(logs[p])
    # Q'/Q = e^{-u} [alpha/prod_{1<=j<=l} L_j + 2 sum_{p<l} 1/prod_{1<=j<=p} L_j]
    prod = 1.0
    s = 2.0
    for p in range(1, l):
        prod *= logs[p]
        s += 2.0 / prod
    prod *= logs[l]
    s += a / prod
    return lnq, math.log(s) - u


# ---------------------------------------------------------------------------
# cumulative integral A(r)

def _sqrtQ(spec):
    def h(t):
        return math.sqrt(eval_Q(spec, t)[0])
    return h


def cumulative_sqrtQ(spec: PotentialSpec, r: float, tol: float = QUAD_TOL) -> float:
    """A(r) = int_0^r Q(t)^(1/2) dt by adaptive Simpson, reusing cached knots.

    Each new value is integrated from the nearest cached knot below r, so a
    monotone sweep of radii costs one pass over the interval.
    """
    r = float(r)
    if r < 0:
        raise DomainError("radius must be non-negative")
    if r == 0.0:
        return 0.0
    cache = spec._cache.setdefault(("A", tol), {"knots": [0.0], "vals": [0.0]})
    knots, vals = cache["knots"], cache["vals"]
    i = bisect_right(knots, r) - 1
    if knots[i] == r:
        return vals[i]
    r_lo, a_lo = knots[i], vals[i]
    seg = adaptive_simpson(_sqrtQ(spec), r_lo, r, rel_tol=tol, abs_tol=tol * a_lo * 1e-3)
    val = a_lo + seg
    with spec._lock:
        j = bisect_right(knots, r)
        if j == 0 or knots[j - 1] != r:
            knots.insert(j, r)
            vals.insert(j, val)
    return val


def cumulative_sqrtQ_array(spec: PotentialSpec, r, tol: float = QUAD_TOL) -> np.ndarray:
    """A at many radii (processed in increasing order for cache reuse)."""
    r = np.asarray(r, dtype=float)
    flat = r.ravel()
    out = np.empty_like(flat)
    for i in np.argsort(flat, kind="stable"):
        out[i] = cumulative_sqrtQ(spec, float(flat[i]), tol)
    return out.reshape(r.shape)


def log_cumulative_sqrtQ(spec: PotentialSpec, u, tol: float = QUAD_TOL, u_direct: float = 20.0) -> np.ndarray:
    """ln A(e^u) for an increasing array u.

    Radii up to e^{u_direct} use the direct quadrature; beyond that each
    segment is integrated in u with the integrand e^{u + ln Q(u)/2} rescaled
    by its right-endpoint value, and segments are summed with logaddexp.
    """
    u = np.asarray(u, dtype=float)
    if np.any(np.diff(u) <= 0):
        raise ValueError("u must be strictly increasing")
    out = np.empty_like(u)

    def phi(v):
        return v + 0.5 * log_Q(spec, v)[0]

    prev_u = None
    prev_val = None
    for i, ui in enumerate(u):
        if ui <= u_direct:
            out[i] = math.log(cumulative_sqrtQ(spec, math.exp(ui), tol))
        else:
            if prev_u is None or prev_u < u_direct:
                start = min(u_direct, ui)
                base = math.log(cumulative_sqrtQ(spec, math.exp(start), tol))
            else:
                start, base = prev_u, prev_val
            # the integrand decays at least like e^{2(v-ui)} leftwards; 40 units suffice
            lo = max(start, ui - 40.0)
            ref = phi(ui)
            seg = adaptive_simpson(lambda v: math.exp(phi(v) - ref), lo, ui, rel_tol=tol)
            out[i] = float(np.logaddexp(base, ref + math.log(seg))) if seg > 0 else base
        prev_u, prev_val = ui, out[i]
    return out


# ---------------------------------------------------------------------------
# sandwich parameters and lower bound

@dataclass(frozen=True)
class SandwichParams:
    """Sandwich configuration (d, k, m, R_m, r0) with r0 = ln A(R_m).

    R_m is stored through its logarithm so that radii beyond the double range
    can still be represented.
    """

    d: float
    k: float
    m: int
    log_R_m: float
    r0: float

    def __post_init__(self):
        if not (0.0 < self.d <= 1.0):
            raise DomainError(f"d must lie in (0, 1], got {self.d}")
        self.aux  # validates k, m, r0

    @property
    def R_m(self) -> float:
        try:
            return math.exp(self.log_R_m)
        except OverflowError:
            return math.inf

    @property
    def aux(self) -> sf.AuxParams:
        return sf.AuxParams(self.k, self.m, self.r0)

    def with_d(self, d: float) -> "SandwichParams":
        return SandwichParams(d=d, k=self.k, m=self.m, log_R_m=self.log_R_m, r0=self.r0)

    def to_dict(self) -> dict:
        note = None
        if self.d == 1.0:
            note = "d = 1 is allowed by the sandwich condition but excluded by the strict Young-split range d < 1"
        return {"d": self.d, "k": self.k, "m": self.m, "R_m": self.R_m, "log_R_m": self.log_R_m,
                "r0": self.r0, "note": note}


def lower_bound(spec: PotentialSpec, sandwich: SandwichParams, r: float, extended: bool = False) -> float:
    """L(r) = d A(r) f_{k,m-1}(ln A(r)).

    With ``extended=True`` the extended f replaces f_{k,m-1}; the two agree for
    r >= R_m.  The plain form raises DomainError where f_{k,m-1} is undefined.
    """
    A = cumulative_sqrtQ(spec, r)
    if not A > 0:
        return 0.0
    la = math.log(A)
    if extended:
        return sandwich.d * A * sf.f_extended(sandwich.aux, la)
    return sandwich.d * A * sf.f_km(sandwich.k, sandwich.m - 1, la)


# ---------------------------------------------------------------------------
# condition checking

@dataclass
class ConditionReport:
    holds: dict
    R_m_found: Optional[float]
    log_R_m: Optional[float]
    r0: Optional[float]
    witness_samples: list
    params: dict
    sampling: dict
    r2_threshold: Optional[float] = None
    messages: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return bool(self.holds) and all(self.holds.values())

    def to_dict(self) -> dict:
        return {
            "holds": dict(self.holds),
            "all_hold": self.ok,
            "R_m_found": self.R_m_found,
            "log_R_m": self.log_R_m,
            "r0": self.r0,
            "r2_below_Q_from": self.r2_threshold,
            "params": self.params,
            "sampling": self.sampling,
            "witness_samples": self.witness_samples,
            "messages": self.messages,
        }

    def sandwich(self, d: float = 1.0) -> SandwichParams:
        if not self.ok:
            raise NotSatisfiable("conditions do not hold", self)
        return SandwichParams(d=d, k=self.params["k"], m=self.params["m"],
                              log_R_m=self.log_R_m, r0=self.r0)


CONDITIONS = ("differentiable", "iterated_log_positive", "ratio_below_one",
              "decay_Qprime", "supercritical_r2")


def _safe_exp(u):
    try:
        return math.exp(u)
    except OverflowError:
        return math.inf


def check_theorem_conditions(spec: PotentialSpec, d: float, k: float, m: int,
                             r_max: float = 1e12, log_r_max: Optional[float] = None,
                             n_samples: int = N_SAMPLES, r_min: Optional[float] = None,
                             tol: float = QUAD_TOL) -> ConditionReport:
    """Find the smallest sampled R_m beyond which all growth conditions hold.

    Samples are log-spaced in r on [r_min, r_max] (uniform in u = ln r);
    ``log_r_max`` overrides r_max for radii beyond the double range.  On the
    sampled tail [R_m, r_max] the following must hold pointwise:

      (ii)  ln^(m)(A(r)) > 0
      (iii) 0 < f_{k,m-1}(ln Q) r Q^(-1/2) < 1
            r^2 < Q
            Q' > 0
    and on the last 10% of samples the ratio in (iii) and Q' Q^(-3/2) must be
    decreasing.  Raises NotSatisfiable (carrying the report) otherwise.
    """
    if not k > 1:
        raise DomainError("k must exceed 1")
    if int(m) != m or m < 1:
        raise DomainError("m must be an integer >= 1")
    if not (0 < d <= 1):
        raise DomainError("d must lie in (0, 1]")
    m = int(m)
    u_max = float(log_r_max) if log_r_max is not None else math.log(r_max)
    if r_min is None:
        r_min = max(spec.floor * (1 + 1e-9), 1.0 + 1e-9) if spec.family != Family.TABULATED \
            else max(spec.floor, 1e-3 * spec.r_table_max)
    if spec.family == Family.TABULATED:
        u_max = min(u_max, math.log(spec.r_table_max))
    u_min = math.log(r_min)
    if not u_max > u_min:
        raise DomainError("r_max must exceed the family floor")
    u = np.linspace(u_min, u_max, n_samples)

    lnq = np.empty_like(u)
    dlog = np.empty_like(u)
    for i, ui in enumerate(u):
        lnq[i], dlog[i] = log_Q(spec, float(ui))
    lnA = log_cumulative_sqrtQ(spec, u, tol)

    # (ii) ln^(m) A > 0  <=>  ln^(m-1)(ln A) > 0
    c_ii = np.zeros(u.size, dtype=bool)
    for i, la in enumerate(lnA):
        try:
            c_ii[i] = sf.iter_log(m - 1, float(la)) > 0
        except sf.DomainError:
            c_ii[i] = False
    # (iii) ln ratio = ln f_{k,m-1}(ln Q) + u - ln Q / 2
    ln_ratio = np.full(u.size, math.inf)
    for i in range(u.size):
        try:
            ln_ratio[i] = sf.log_f_km(k, m - 1, float(lnq[i])) + u[i] - 0.5 * lnq[i]
        except sf.DomainError:
            pass
    c_iii = ln_ratio < 0
    c_r2 = lnq - 2.0 * u > 0
    c_inc = np.isfinite(dlog)
    ln_decay = dlog - 0.5 * lnq  # ln(Q' Q^{-3/2})
    c_diff = np.ones(u.size, dtype=bool)
    if spec.family != Family.TABULATED and spec.l > 0:
        c_diff = u > math.log(spec.floor)

    pointwise = c_ii & c_iii & c_r2 & c_inc & c_diff
    bad = np.nonzero(~pointwise)[0]
    j0 = 0 if bad.size == 0 else int(bad[-1]) + 1

    ntail = max(3, int(math.ceil(TAIL_FRACTION * u.size)))
    tail = slice(u.size - ntail, u.size)
    ratio_decreasing = bool(np.all(np.diff(ln_ratio[tail]) < 0))
    decay_decreasing = bool(np.all(np.diff(ln_decay[tail]) < 0))

    # threshold where r^2 < Q starts on the sampled range
    r2_bad = np.nonzero(~c_r2)[0]
    r2_from = u[0] if r2_bad.size == 0 else (u[r2_bad[-1] + 1] if r2_bad[-1] + 1 < u.size else None)

    params = {"d": d, "k": k, "m": m, "spec": spec.describe()}
    sampling = {"n_samples": int(n_samples), "spacing": "log", "r_min": r_min,
                "log_r_max": u_max, "r_max": _safe_exp(u_max), "tail_fraction": TAIL_FRACTION}
    msgs = []
    found = j0 < u.size - ntail  # R_m must leave the monotone tail inside [R_m, r_max]
    if found:
        sl = slice(j0, u.size)
        holds = {
            "differentiable": bool(np.all(c_diff[sl])),
            "iterated_log_positive": bool(np.all(c_ii[sl])),
            "ratio_below_one": bool(np.all(c_iii[sl])) and ratio_decreasing,
            "decay_Qprime": bool(np.all(c_inc[sl])) and decay_decreasing,
            "supercritical_r2": bool(np.all(c_r2[sl])),
        }
    else:
        holds = {c: False for c in CONDITIONS}
        holds["differentiable"] = bool(c_diff[-1])
        holds["iterated_log_positive"] = bool(c_ii[-1])
        holds["ratio_below_one"] = bool(c_iii[-1]) and ratio_decreasing
        holds["decay_Qprime"] = bool(c_inc[-1]) and decay_decreasing
        holds["supercritical_r2"] = bool(c_r2[-1])
        msgs.append("no sampled radius R_m <= r_max has all conditions on its tail")
    if not ratio_decreasing:
        msgs.append("ratio f(ln Q) r Q^(-1/2) is not decreasing on the sampled tail")
    if not decay_decreasing:
        msgs.append("Q' Q^(-3/2) is not decreasing on the sampled tail")

    idx = np.unique(np.linspace(j0 if found else 0, u.size - 1, 16).astype(int))
    witnesses = []
    for i in idx:
        witnesses.append({
            "log_r": float(u[i]), "r": _safe_exp(float(u[i])),
            "ratio": _safe_exp(float(ln_ratio[i])) if np.isfinite(ln_ratio[i]) else None,
            "Qprime_Q_m32": _safe_exp(float(ln_decay[i])),
            "log_Q_minus_2log_r": float(lnq[i] - 2 * u[i]),
            "log_A": float(lnA[i]),
        })

    report = ConditionReport(
        holds=holds,
        R_m_found=_safe_exp(float(u[j0])) if found else None,
        log_R_m=float(u[j0]) if found else None,
        r0=float(lnA[j0]) if found else None,
        witness_samples=witnesses,
        params=params,
        sampling=sampling,
        r2_threshold=(_safe_exp(float(r2_from)) if r2_from is not None else None),
        messages=msgs,
    )
    if not report.ok:
        raise NotSatisfiable("; ".join(msgs) or "conditions fail on the sampled tail", report)
    return report


def check_sandwich(spec: PotentialSpec, sandwich: SandwichParams, q_func: Callable, radii) -> np.ndarray:
    """Boolean per radius: L(r) <= q(r) <= Q(r), using the extended lower bound."""
    radii = np.asarray(radii, dtype=float)
    ok = np.empty(radii.size, dtype=bool)
    qv = np.asarray(q_func(radii), dtype=float)
    for i, r in enumerate(radii):
        Q = eval_Q(spec, float(r))[0]
        L = lower_bound(spec, sandwich, float(r), extended=True)
        ok[i] = (L <= qv[i]) and (qv[i] <= Q * (1 + 1e-12))
    return ok


def decay_radius(spec: PotentialSpec, threshold: float = 1e-14) -> float:
    """Smallest R with exp(-sqrt2 A(R)) < threshold (Dirichlet truncation radius)."""
    target = -math.log(threshold) / math.sqrt(2.0)
    hi = 1.0
    while cumulative_sqrtQ(spec, hi) < target:
        hi *= 2.0
        if hi > 1e6:
            raise DomainError("decay radius exceeds 1e6")
    lo = hi / 2.0 if hi > 1.0 else 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if cumulative_sqrtQ(spec, mid) < target:
            lo = mid
        else:
            hi = mid
    return hi
