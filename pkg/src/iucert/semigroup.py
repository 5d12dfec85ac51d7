"""Heat semigroup e^{-tH}, the ground-state weighted semigroup, and their checks.

Two propagation routes share one interface:

* ``"spectral"``: sum_j e^{-lambda_j t} <u, v_j>_w v_j over the computed modes.
  Exact semigroup law, but its rounding error is absolute (~1e-16 of the
  largest entry), so ratios against a tiny ground state in the far field are
  meaningless.
* ``"expm"``: e^{-t(A - s)} for the Liouville matrix A by scaling and squaring of
  the Taylor series of the entrywise nonnegative matrix sigma I - A.  Every
  operation adds or multiplies nonnegative numbers, so entries keep relative
  accuracy however small they get.  The shift s = lambda_0 keeps the result
  O(1) for large t; the factor e^{-s t} is carried separately as a log scale.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .discretize import DiscreteOperator, GroundState, Spectrum
from .errors import ContractionViolation, TruncationWarning
from .io import format_csv_rows, atomic_write_text, write_kernel_binary

TAIL_TOL = 1e-8
CONTRACTION_TOL = 1e-9
_EXPM_CACHE_SIZE = 12


def _right_mul_tridiag(X: np.ndarray, d: np.ndarray, e: np.ndarray) -> np.ndarray:
    Y = X * d[None, :]
    Y[:, :-1] += X[:, 1:] * e[None, :]
    Y[:, 1:] += X[:, :-1] * e[None, :]
    return Y


def shifted_expm(op: DiscreteOperator, t: float, shift: float) -> np.ndarray:
    """e^{-t (A - shift)} as a dense, entrywise nonnegative matrix."""
    key = (float(t), float(shift))
    cache = op._expm_cache
    if key in cache:
        return cache[key]
    N = op.grid.N
    if t == 0:
        return np.eye(N)
    sigma = float(np.max(op.diag))
    bd = sigma - op.diag  # >= 0
    be = -op.offdiag  # >= 0
    normB = float(np.max(bd + np.r_[be, 0.0] + np.r_[0.0, be]))
    s = max(0, int(math.ceil(math.log2(max(t * normB / 0.5, 1.0)))))
    tau = t / 2**s
    # Taylor series of e^{tau B}; tau ||B|| <= 1/2 so 30 terms are far past roundoff
    F = np.eye(N)
    term = np.eye(N)
    for k in range(1, 31):
        term = _right_mul_tridiag(term, tau * bd / k, tau * be / k)
        F += term
        if np.max(term) <= 1e-18 * np.max(F) and k > 4:
            break
    F *= math.exp(-tau * (sigma - shift))
    for _ in range(s):
        F = F @ F
    F = 0.5 * (F + F.T)
    if len(cache) >= _EXPM_CACHE_SIZE:
        cache.pop(next(iter(cache)))
    cache[key] = F
    return F


def _tail_check(spectrum: Spectrum, x: np.ndarray, tol: float):
    if spectrum.K == spectrum.grid.N:
        return 0.0
    coef = spectrum.U.T @ x
    total = float(np.linalg.norm(x))
    tail = math.sqrt(max(total**2 - float(np.linalg.norm(coef)) ** 2, 0.0))
    rel = tail / total if total > 0 else 0.0
    if rel > tol:
        warnings.warn(f"spectral truncation leaves relative tail {rel:.2e} > {tol:.1e}",
                      TruncationWarning, stacklevel=3)
    return rel


def _apply_u_scaled(spectrum: Spectrum, x: np.ndarray, t: float, method: str, tol: float):
    """e^{-tA} x in Liouville space as (y, log_scale) with e^{-tA} x = e^{log_scale} y."""
    E0 = float(spectrum.eigenvalues[0])
    if method == "spectral":
        _tail_check(spectrum, x, tol)
        coef = spectrum.U.T @ x
        decay = np.exp(-(spectrum.eigenvalues - E0) * t)
        return spectrum.U @ (decay[:, None] * coef if coef.ndim == 2 else decay * coef), -E0 * t
    if method == "expm":
        F = shifted_expm(spectrum.operator, t, E0)
        return F @ x, -E0 * t
    raise ValueError(f"unknown propagation method {method!r}")


def _apply_u(spectrum: Spectrum, x: np.ndarray, t: float, method: str, tol: float) -> np.ndarray:
    y, log_scale = _apply_u_scaled(spectrum, x, t, method, tol)
    return math.exp(log_scale) * y


def propagate_scaled(spectrum: Spectrum, u0, t: float, method: str = "expm", tol: float = TAIL_TOL):
    """(y, log_scale) with e^{-tH} u0 = e^{log_scale} y; y stays O(|u0|) for large t."""
    if t < 0:
        raise ValueError("t must be non-negative")
    u0 = np.asarray(u0)
    D = spectrum.grid.liouville
    if np.iscomplexobj(u0):
        yr, ls = propagate_scaled(spectrum, u0.real, t, method, tol)
        yi, _ = propagate_scaled(spectrum, u0.imag, t, method, tol)
        return yr + 1j * yi, ls
    y, ls = _apply_u_scaled(spectrum, D * u0.astype(float), t, method, tol)
    return y / D, ls


def propagate(spectrum: Spectrum, u0, t: float, method: str = "spectral", tol: float = TAIL_TOL) -> np.ndarray:
    """(e^{-tH} u0) at the nodes; complex input is propagated componentwise."""
    if t < 0:
        raise ValueError("t must be non-negative")
    u0 = np.asarray(u0)
    D = spectrum.grid.liouville
    if np.iscomplexobj(u0):
        return (propagate(spectrum, u0.real, t, method, tol)
                + 1j * propagate(spectrum, u0.imag, t, method, tol))
    return _apply_u(spectrum, D * u0.astype(float), t, method, tol) / D


def weighted_propagate(gs: GroundState, spectrum: Spectrum, u0, t: float,
                       method: str = "expm", tol: float = TAIL_TOL) -> np.ndarray:
    """phi^{-1} e^{-tH}(phi u0).  In Liouville space phi becomes the vector gs.u."""
    u0 = np.asarray(u0)
    if np.iscomplexobj(u0):
        return (weighted_propagate(gs, spectrum, u0.real, t, method, tol)
                + 1j * weighted_propagate(gs, spectrum, u0.imag, t, method, tol))
    Phi = gs.u
    return _apply_u(spectrum, Phi * u0.astype(float), t, method, tol) / Phi


def lp_mu_norm(gs: GroundState, u, p: float) -> float:
    """(sum |u|^p phi^2 w)^(1/p); p = inf gives the max norm."""
    a = np.abs(np.asarray(u))
    if p == math.inf:
        return float(np.max(a))
    if p < 1:
        raise ValueError("p must be >= 1")
    mu = gs.mu_weights
    m = float(np.max(a))
    if m == 0:
        return 0.0
    return m * float(np.sum((a / m) ** p * mu)) ** (1.0 / p)


def contraction_report(gs: GroundState, spectrum: Spectrum, u0, t: float,
                       p_list: Sequence[float] = (1, 2, math.inf), tol: float = CONTRACTION_TOL,
                       method: str = "expm", raise_on_violation: bool = True) -> dict:
    """Norm ratios ||e^{-tH~} u0||_{p,mu} / ||u0||_{p,mu}, which must not exceed 1.

    For nonnegative u0 the max-norm ratio must also stay below e^{-t E0}.
    Signed u0 is additionally pushed through the split u0 = u+ - u- in L^1.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    u0 = np.asarray(u0, dtype=float)
    out = weighted_propagate(gs, spectrum, u0, t, method)
    rows = []
    violations = []
    for p in p_list:
        den = lp_mu_norm(gs, u0, p)
        ratio = lp_mu_norm(gs, out, p) / den if den > 0 else 0.0
        row = {"p": "inf" if p == math.inf else float(p), "ratio": ratio, "bound": 1.0,
               "ok": ratio <= 1.0 + tol}
        if p == math.inf and np.all(u0 >= 0):
            bound = math.exp(-t * gs.E0)
            row["bound"] = bound
            row["ok"] = ratio <= bound * (1.0 + tol)
        if not row["ok"]:
            violations.append(row)
        rows.append(row)
    report = {"t": t, "E0": gs.E0, "method": method, "ratios": rows, "ok": not violations}
    if np.any(u0 < 0) and np.any(u0 > 0):
        plus = weighted_propagate(gs, spectrum, np.maximum(u0, 0), t, method)
        minus = weighted_propagate(gs, spectrum, np.maximum(-u0, 0), t, method)
        split = lp_mu_norm(gs, plus, 1) + lp_mu_norm(gs, minus, 1)
        report["split_l1"] = {"out": lp_mu_norm(gs, out, 1), "split_sum": split,
                              "input": lp_mu_norm(gs, u0, 1),
                              "ok": lp_mu_norm(gs, out, 1) <= split * (1 + tol) + 1e-300
                              and split <= lp_mu_norm(gs, u0, 1) * (1 + tol)}
        report["ok"] = report["ok"] and report["split_l1"]["ok"]
    if not report["ok"] and raise_on_violation:
        raise ContractionViolation(f"contraction fails at t={t}: {violations or report.get('split_l1')}")
    return report


def positivity_check(spectrum: Spectrum, u0, t: float, method: str = "expm") -> bool:
    """True iff e^{-tH} u0 is strictly positive at every node."""
    out = propagate(spectrum, u0, t, method)
    return bool(np.all(out > 0))


@dataclass
class KernelMatrix:
    """Heat kernel k(t, r_i, r_j) = exp(log_scale) * scaled[i, j].

    Weights are folded so that (e^{-tH} u)_i = sum_j k_ij u_j w_j.
    """

    scaled: np.ndarray
    log_scale: float
    t: float
    K: int
    method: str
    grid: object

    @property
    def values(self) -> np.ndarray:
        return math.exp(self.log_scale) * self.scaled

    def apply(self, u) -> np.ndarray:
        return self.values @ (np.asarray(u) * self.grid.weights)

    def write(self, bin_path, csv_path, gs: Optional[GroundState] = None):
        write_kernel_binary(bin_path, self.scaled, self.t, self.K, self.log_scale)
        r = self.grid.nodes
        w = self.grid.weights
        k = self.values
        rows = []
        for i in range(r.size):
            row = [i, r[i], k[i, i], float(k[i] @ w)]
            if gs is not None:
                row.append(math.exp(self.log_scale) * float(np.max(self.scaled[i] / (gs.phi[i] * gs.phi))))
            rows.append(row)
        header = ["index", "r", "k_diag", "row_mass"] + (["row_max_ratio"] if gs is not None else [])
        atomic_write_text(csv_path, format_csv_rows(header, rows))


def heat_kernel(spectrum: Spectrum, t: float, method: str = "expm", tol: float = 1e-10) -> KernelMatrix:
    if not t > 0:
        raise ValueError("t must be positive")
    grid = spectrum.grid
    D = grid.liouville
    h = grid.spacing
    E0 = float(spectrum.eigenvalues[0])
    if method == "expm":
        F = shifted_expm(spectrum.operator, t, E0)
        K = grid.N
    elif method == "spectral":
        lam = spectrum.eigenvalues
        if spectrum.K < grid.N and math.exp(-(lam[-1] - E0) * t) > TAIL_TOL:
            warnings.warn("heat kernel: highest retained mode not yet negligible", TruncationWarning, stacklevel=2)
        F = (spectrum.U * np.exp(-(lam - E0) * t)) @ spectrum.U.T
        K = spectrum.K
    else:
        raise ValueError(f"unknown method {method!r}")
    scaled = F / (D[:, None] * D[None, :] * h)
    if np.min(scaled) * math.exp(-E0 * t) < -tol:
        warnings.warn("heat kernel has entries below -tol", TruncationWarning, stacklevel=2)
    return KernelMatrix(scaled=scaled, log_scale=-E0 * t, t=t, K=K, method=method, grid=grid)


def log_kernel_iu_ratio(gs: GroundState, kernel: KernelMatrix) -> float:
    phi = gs.phi
    with np.errstate(divide="ignore"):
        m = float(np.max(kernel.scaled / (phi[:, None] * phi[None, :])))
    return kernel.log_scale + math.log(m) if m > 0 else -math.inf


def kernel_iu_ratio(gs: GroundState, kernel: KernelMatrix) -> float:
    """sup_ij k_ij / (phi_i phi_j)."""
    return math.exp(log_kernel_iu_ratio(gs, kernel))


# ---------------------------------------------------------------------------
# log-Sobolev diagnostics

def dirichlet_form(gs: GroundState, w, v) -> float:
    """<(H~ - E0) w, v>_mu in the discrete model.

    With Phi the Liouville ground-state vector (A Phi = E0 Phi) this equals
    h * sum over neighbours of (1/h^2) Phi_i Phi_{i+1} (w_i - w_{i+1})(v_i - v_{i+1}),
    which is cancellation-free and vanishes on constants.
    """
    Phi = gs.u
    h = gs.grid.spacing
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    return float(np.sum(Phi[:-1] * Phi[1:] * np.diff(w) * np.diff(v)) / h)


def _ls_terms(gs: GroundState, w: np.ndarray, eps: float, p: float):
    mu = gs.mu_weights
    norm = lp_mu_norm(gs, w, p)
    with np.errstate(divide="ignore", invalid="ignore"):
        lhs_terms = np.where(w > 0, w**p * np.log(np.where(w > 0, w, 1.0)), 0.0)
    lhs = float(np.sum(lhs_terms * mu))
    form = dirichlet_form(gs, w, np.abs(w) ** (p - 1))
    return lhs, form, norm


def log_sobolev_residual(gs: GroundState, spectrum: Spectrum, u0, t: float, eps: float, p: float,
                         beta_val: float, method: str = "expm") -> float:
    """RHS - LHS of the log-Sobolev inequality for w = e^{-tH~} u0.

    LHS = sum w^p ln w mu, RHS = eps <(H~ - E0) w, w^{p-1}>_mu + (2 beta/p)||w||^p
    + ||w||^p ln ||w||, with p,mu norms.
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    w = weighted_propagate(gs, spectrum, u0, t, method) if t > 0 else np.asarray(u0, dtype=float)
    lhs, form, norm = _ls_terms(gs, w, eps, p)
    return eps * form + (2.0 * beta_val / p) * norm**p + norm**p * math.log(norm) - lhs


def calibrate_log_sobolev(gs: GroundState, spectrum: Spectrum, beta0: Callable[[float], float],
                          samples: Iterable, method: str = "expm"):
    """Smallest constant C such that every sampled residual with beta0(eps) + C is >= 0.

    ``samples`` yields (u0, t, eps, p).  Returns (C_LS, rows) where each row holds
    the constant that sample alone would need.
    """
    rows = []
    C_LS = -math.inf
    for idx, (u0, t, eps, p) in enumerate(samples):
        w = weighted_propagate(gs, spectrum, u0, t, method) if t > 0 else np.asarray(u0, dtype=float)
        lhs, form, norm = _ls_terms(gs, w, eps, p)
        b0 = beta0(eps)
        r0 = eps * form + (2.0 * b0 / p) * norm**p + norm**p * math.log(norm) - lhs
        need = -r0 * p / (2.0 * norm**p)
        rows.append({"sample": idx, "t": float(t), "eps": float(eps), "p": float(p),
                     "beta0": b0, "required_C": need})
        C_LS = max(C_LS, need)
    return float(C_LS), rows
