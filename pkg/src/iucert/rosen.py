"""Subsolution psi = exp(-sqrt2 A), the radial inequality, comparison with phi, and
Rosen certificates -ln phi <= eps q + gamma(eps).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import potentials as pt
from . import specialfn as sf
from .discretize import GroundState, RadialGrid
from .errors import ComparisonFailure, NotSatisfiable, SandwichViolation
from .numerics import adaptive_simpson

SQRT2 = math.sqrt(2.0)
EPS_LIST = (1.0, 0.3, 0.1, 0.03, 0.01)
COMPARISON_SLACK = 1e-6
FD_STEP = 1e-3  # local step, in units of Q^(-1/2)


def subsolution_psi(spec: pt.PotentialSpec, r: float, tol: float = pt.QUAD_TOL) -> float:
    return math.exp(-SQRT2 * pt.cumulative_sqrtQ(spec, r, tol))


def log_psi_nodes(spec: pt.PotentialSpec, radii) -> np.ndarray:
    """ln psi = -sqrt2 A, exactly."""
    return -SQRT2 * pt.cumulative_sqrtQ_array(spec, radii)


def radial_factor(Q: float, dQ: float, r: float, n_dim: int) -> float:
    """(psi'' + (n-1)/r psi') / (Q psi) for psi = exp(-sqrt2 A)."""
    return 2.0 - dQ / (SQRT2 * Q**1.5) - SQRT2 * (n_dim - 1) / (r * math.sqrt(Q))


def _fd_factor(spec: pt.PotentialSpec, r: float, n_dim: int) -> float:
    """Finite-difference estimate of the same factor with a local step."""
    Q = pt.eval_Q(spec, r)[0]
    delta = FD_STEP / math.sqrt(Q)
    sq = lambda t: math.sqrt(pt.eval_Q(spec, t)[0])
    a_plus = adaptive_simpson(sq, r, r + delta, rel_tol=1e-13)
    a_minus = adaptive_simpson(sq, r - delta, r, rel_tol=1e-13)
    # psi(r +- delta)/psi(r) - 1, without cancellation
    ep = math.expm1(-SQRT2 * a_plus)
    em = math.expm1(SQRT2 * a_minus)
    second = (ep + em) / delta**2
    first = (ep - em) / (2.0 * delta)
    return (second + (n_dim - 1) / r * first) / Q


def verify_radial_inequality(spec: pt.PotentialSpec, grid: RadialGrid, n_dim: Optional[int] = None,
                             fd_check: bool = True):
    """Smallest node R_ineq beyond which |Q'/Q^(3/2) + (n-1)/(r Q^(1/2))| < 1/2, plus checks.

    On every node >= R_ineq the analytic factor of the identity
    psi'' + (n-1)/r psi' = Q psi (2 - Q'/(sqrt2 Q^(3/2)) - sqrt2 (n-1)/(r Q^(1/2)))
    must be >= 1; the bound 2 - 1/sqrt2 is reported as well.  The finite-difference
    estimate is compared against the factor node by node.
    """
    n = grid.n_dim if n_dim is None else n_dim
    r = grid.nodes
    QdQ = np.array([pt.eval_Q(spec, float(x)) for x in r])
    Q, dQ = QdQ[:, 0], QdQ[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        bracket = dQ / Q**1.5 + (n - 1) / (r * np.sqrt(Q))
        factor = 2.0 - dQ / (SQRT2 * Q**1.5) - SQRT2 * (n - 1) / (r * np.sqrt(Q))
    good = (np.abs(bracket) < 0.5) & (dQ >= 0) & np.isfinite(bracket)
    bad = np.nonzero(~good)[0]
    j0 = 0 if bad.size == 0 else int(bad[-1]) + 1
    if j0 >= r.size:
        raise NotSatisfiable("bracket condition fails at the last grid node")
    tail = slice(j0, r.size)
    fmin = float(np.min(factor[tail]))
    report = {
        "R_ineq": float(r[j0]),
        "n_nodes_verified": int(r.size - j0),
        "bracket_max": float(np.max(np.abs(bracket[tail]))),
        "factor_min": fmin,
        "factor_lower_bound": 2.0 - 1.0 / SQRT2,
        "factor_ge_one": bool(fmin >= 1.0),
        "factor_ge_bound": bool(fmin >= 2.0 - 1.0 / SQRT2),
    }
    if fd_check:
        # interior verified nodes, away from the outer end of the grid
        idx = np.arange(j0, r.size - 1)
        rel = np.empty(idx.size)
        fd_min = math.inf
        for n_i, i in enumerate(idx):
            f_fd = _fd_factor(spec, float(r[i]), n)
            fd_min = min(fd_min, f_fd)
            rel[n_i] = abs(f_fd - factor[i]) / abs(factor[i])
        report["fd_max_rel_diff"] = float(np.max(rel)) if rel.size else 0.0
        report["fd_factor_min"] = float(fd_min)
        report["fd_agrees"] = bool(report["fd_max_rel_diff"] <= 1e-6)
        report["fd_inequality_holds"] = bool(fd_min >= 1.0 - 1e-6)
    if fmin < 1.0:
        raise NotSatisfiable(f"radial factor drops to {fmin:.6g} < 1 beyond R_ineq")
    return float(r[j0]), report


def comparison_constant(gs: GroundState, spec: pt.PotentialSpec, R: float, delta: float,
                        slack: float = COMPARISON_SLACK, raise_on_failure: bool = True):
    """c = max psi/phi on (R, R+delta], then check psi <= c phi (1+slack) beyond R.

    Works with logarithms so that tiny tail values compare exactly.
    Returns (c, violations) where violations lists offending radii.
    """
    r = gs.grid.nodes
    if not R + delta < gs.grid.R_max:
        raise ValueError("R + delta must stay inside the grid")
    log_ratio = log_psi_nodes(spec, r) - np.log(gs.phi)
    window = (r > R) & (r <= R + delta)
    if not np.any(window):
        raise ValueError("no grid nodes in (R, R + delta]")
    log_c = float(np.max(log_ratio[window]))
    beyond = r > R
    viol = np.nonzero(beyond & (log_ratio > log_c + math.log1p(slack)))[0]
    violations = [{"r": float(r[i]), "log_excess": float(log_ratio[i] - log_c)} for i in viol]
    if violations and raise_on_failure:
        raise ComparisonFailure(f"psi <= c phi fails at {len(violations)} nodes beyond R={R}", violations)
    return math.exp(log_c), violations


def calibrate_C(gs: GroundState, spec: pt.PotentialSpec, return_argmax: bool = False):
    """Smallest C with -ln phi <= sqrt2 A + C at every node."""
    r = gs.grid.nodes
    vals = -np.log(gs.phi) + log_psi_nodes(spec, r)
    i = int(np.argmax(vals))
    C = float(vals[i])
    return (C, float(r[i])) if return_argmax else C


def gamma_log_term(sandwich: pt.SandwichParams, eps: float) -> float:
    """ln g(sqrt2/(d eps))."""
    return sf.g_log(sandwich.aux, SQRT2 / (sandwich.d * eps))


def gamma_of_eps(sandwich: pt.SandwichParams, eps: float, C: float) -> float:
    """sqrt2 g(sqrt2/(d eps)) + C (inf if g overflows)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    lg = gamma_log_term(sandwich, eps)
    if lg > 709.0:
        return math.inf
    return SQRT2 * math.exp(lg) + C


def auto_d(spec: pt.PotentialSpec, k: float, m: int, log_R_m: float, r0: float,
           radii, q_values) -> float:
    """Largest d <= 1 with d A f(ln A) <= q at every given radius (f extended).

    At radii >= R_m the sandwich condition already forces d <= 1; below R_m this
    extends the lower bound to the whole grid, so that Young's inequality covers
    every node of the certificate.
    """
    base = pt.SandwichParams(d=1.0, k=k, m=m, log_R_m=log_R_m, r0=r0)
    radii = np.asarray(radii, dtype=float)
    q_values = np.asarray(q_values, dtype=float)
    d = 1.0
    for r, q in zip(radii, q_values):
        L1 = pt.lower_bound(spec, base, float(r), extended=True)
        if L1 > 0:
            d = min(d, q / L1)
    if not d > 0:
        raise SandwichViolation("no positive d keeps the lower bound below q on the grid")
    return float(d)


def tail_sandwich_check(spec: pt.PotentialSpec, sandwich: pt.SandwichParams,
                        q_func: Optional[Callable], log_r_max: float, n_samples: int = 512):
    """Sandwich d A f(ln A) <= q <= Q on sampled radii in [R_m, r_max].

    With q_func None (q = Q) the check runs in log coordinates and can reach
    beyond the double range.  A generic q is sampled where radii are finite.
    """
    lo = sandwich.log_R_m
    if q_func is None:
        u = np.linspace(lo, log_r_max, n_samples)
        lnA = pt.log_cumulative_sqrtQ(spec, u)
        ok = np.empty(u.size, dtype=bool)
        for i, ui in enumerate(u):
            lnq = pt.log_Q(spec, float(ui))[0]
            lnL = math.log(sandwich.d) + lnA[i] + sf.log_f_extended(sandwich.aux, float(lnA[i]))
            ok[i] = lnL <= lnq
        return bool(np.all(ok)), int(np.sum(~ok))
    hi = min(log_r_max, 690.0)
    if lo > hi:
        return False, -1  # tail not representable for a generic q
    r = np.exp(np.linspace(lo, hi, n_samples))
    ok = pt.check_sandwich(spec, sandwich, q_func, r)
    return bool(np.all(ok)), int(np.sum(~ok))


@dataclass
class RosenCertificate:
    C_calibrated: float
    C_used: float
    C_argmax_r: float
    entries: list
    R_ineq: Optional[float]
    comparison_c: Optional[float]
    sandwich_valid: bool
    sandwich: Optional[dict]
    grid_sandwich_fraction: Optional[float]
    comparison_violations: list = field(default_factory=list)
    radial_report: Optional[dict] = None
    notes: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        if not self.sandwich_valid:
            return False
        return all(e["min_margin"] is not None and e["min_margin"] >= 0 for e in self.entries)

    def to_dict(self) -> dict:
        return {
            "C": self.C_calibrated,
            "C_used": self.C_used,
            "C_argmax_r": self.C_argmax_r,
            "comparison_c": self.comparison_c,
            "comparison_violations": self.comparison_violations,
            "R_ineq": self.R_ineq,
            "entries": self.entries,
            "sandwich_valid": self.sandwich_valid,
            "sandwich": self.sandwich,
            "grid_sandwich_fraction": self.grid_sandwich_fraction,
            "radial_inequality": self.radial_report,
            "valid": self.valid,
            "notes": self.notes,
        }


def rosen_certificate(gs: GroundState, q, spec: pt.PotentialSpec, sandwich: Optional[pt.SandwichParams],
                      eps_list: Sequence[float] = EPS_LIST, log_r_max: float = math.log(1e12),
                      comparison_delta: float = 0.5, strict: bool = False) -> RosenCertificate:
    """Rosen certificate for the computed ground state.

    ``q`` is either a callable radial potential or the per-node samples used to
    build ``gs``; pass ``q=None`` when q equals the bounding potential Q.  The
    sandwich is checked on [R_m, r_max]; when it fails the certificate carries
    sandwich_valid = False and only the empirical gamma_emp values (or raises
    SandwichViolation if ``strict``).
    """
    r = gs.grid.nodes
    if q is None:
        q_nodes = pt.Q_array(spec, r)
        q_func = None
    elif callable(q):
        q_nodes = np.asarray(q(r), dtype=float)
        q_func = q
    else:
        q_nodes = np.asarray(q, dtype=float)
        q_func = None if np.allclose(q_nodes, pt.Q_array(spec, r), rtol=1e-12, atol=0) else False
    ln_phi = np.log(gs.phi)
    notes = []

    sandwich_valid = sandwich is not None
    grid_frac = None
    if sandwich is not None:
        if q_func is False:
            # samples only: the tail can be checked on grid nodes >= R_m
            tail_nodes = r >= sandwich.R_m
            ok = pt.check_sandwich(spec, sandwich, lambda x: q_nodes[tail_nodes], r[tail_nodes]) \
                if np.any(tail_nodes) else np.array([True])
            sandwich_valid = bool(np.all(ok))
            notes.append("tail sandwich checked on grid nodes only")
        else:
            sandwich_valid, _ = tail_sandwich_check(spec, sandwich, q_func, log_r_max)
            tail_nodes = r >= sandwich.R_m
            if np.any(tail_nodes):
                qf = (lambda x: pt.Q_array(spec, x)) if q_func is None else q_func
                sandwich_valid &= bool(np.all(pt.check_sandwich(spec, sandwich, qf, r[tail_nodes])))
        L = np.array([pt.lower_bound(spec, sandwich, float(x), extended=True) for x in r])
        grid_frac = float(np.mean(L <= q_nodes))
        if sandwich.d == 1.0:
            notes.append("d = 1: outside the strict range d < 1 used for the Young split")
    if not sandwich_valid:
        if strict:
            raise SandwichViolation("q is not sandwiched on the declared tail")
        notes.append("sandwich invalid: theoretical gamma not applicable, gamma_emp only")

    C_cal, C_r = calibrate_C(gs, spec, return_argmax=True)
    # gamma is built with a positive constant; a negative calibrated value is raised to 0
    C = max(C_cal, 0.0)
    entries = []
    for eps in eps_list:
        gamma_emp = float(np.max(-ln_phi - eps * q_nodes))
        entry = {"eps": float(eps), "gamma_emp": gamma_emp, "gamma": None, "log_g": None,
                 "min_margin": None, "argmin_r": None, "slack": None}
        if sandwich_valid:
            lg = gamma_log_term(sandwich, eps)
            gamma = gamma_of_eps(sandwich, eps, C)
            margins = eps * q_nodes + gamma + ln_phi
            i = int(np.argmin(margins))
            entry.update(gamma=gamma, log_g=lg, min_margin=float(margins[i]), argmin_r=float(r[i]),
                         slack=gamma - gamma_emp)
        entries.append(entry)

    try:
        R_ineq, rad_report = verify_radial_inequality(spec, gs.grid, fd_check=False)
    except NotSatisfiable as exc:
        R_ineq, rad_report = None, {"error": str(exc)}
    comp_c, viol = None, []
    if R_ineq is not None and R_ineq + comparison_delta < gs.grid.R_max:
        comp_c, viol = comparison_constant(gs, spec, R_ineq, comparison_delta, raise_on_failure=False)
    return RosenCertificate(
        C_calibrated=C_cal, C_used=C, C_argmax_r=C_r, entries=entries, R_ineq=R_ineq, comparison_c=comp_c,
        sandwich_valid=sandwich_valid, sandwich=sandwich.to_dict() if sandwich is not None else None,
        grid_sandwich_fraction=grid_frac, comparison_violations=viol, radial_report=rad_report,
        notes=notes,
    )
