"""Radial grids, the symmetrized Sturm-Liouville matrix, and its low eigenpairs.

With u = r^((n-1)/2) psi the radial operator -psi'' - (n-1)/r psi' + q psi becomes
-u'' + [q + (n-1)(n-3)/(4 r^2)] u on (0, R_max) with Dirichlet ends.  Central
differences on the uniform grid r_i = i h give a symmetric tridiagonal matrix A
whose off-diagonals are -1/h^2.  In u-variables the weighted inner product
sum_i psi_i chi_i r_i^(n-1) h is just h * sum_i u_i v_i.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded

from .errors import ConvergenceError, DiscretizationWarning, DomainError, InvalidPotential, SignError
from .io import atomic_write_text, format_csv_rows

MIN_N = 16


@dataclass(frozen=True)
class RadialGrid:
    n_dim: int
    R_max: float
    N: int

    def __post_init__(self):
        if int(self.n_dim) != self.n_dim or self.n_dim < 3:
            raise DomainError("n_dim must be an integer >= 3")
        if not self.R_max > 0:
            raise DomainError("R_max must be positive")
        if int(self.N) != self.N or self.N < 3:
            raise DomainError("N must be an integer >= 3")
        if self.N < MIN_N:
            warnings.warn(f"N={self.N} is below the supported minimum {MIN_N}; "
                          "error estimates are unreliable", DiscretizationWarning, stacklevel=2)

    @property
    def spacing(self) -> float:
        return self.R_max / (self.N + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.spacing * np.arange(1, self.N + 1)

    @property
    def weights(self) -> np.ndarray:
        r = self.nodes
        return r ** (self.n_dim - 1) * self.spacing

    @property
    def liouville(self) -> np.ndarray:
        """D_i = r_i^((n-1)/2), so u = D psi."""
        return self.nodes ** (0.5 * (self.n_dim - 1))

    @property
    def coarse(self) -> bool:
        return self.N < MIN_N


@dataclass(eq=False)
class DiscreteOperator:
    grid: RadialGrid
    q_values: np.ndarray
    diag: np.ndarray
    offdiag: np.ndarray
    _expm_cache: dict = field(default_factory=dict, repr=False)

    @property
    def weight(self) -> np.ndarray:
        return self.grid.weights

    def matvec(self, u: np.ndarray) -> np.ndarray:
        out = self.diag * u
        out[:-1] += self.offdiag * u[1:]
        out[1:] += self.offdiag * u[:-1]
        return out

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)

    @property
    def gershgorin_lower(self) -> float:
        rad = np.zeros_like(self.diag)
        rad[:-1] += np.abs(self.offdiag)
        rad[1:] += np.abs(self.offdiag)
        return float(np.min(self.diag - rad))


def assemble_operator(grid: RadialGrid, q) -> DiscreteOperator:
    """Tridiagonal matrix of -u'' + [q + (n-1)(n-3)/(4r^2)] u, Dirichlet at 0 and R_max."""
    q = np.asarray(q, dtype=float)
    if q.shape != (grid.N,):
        raise InvalidPotential(f"expected {grid.N} potential samples, got shape {q.shape}")
    if np.any(~np.isfinite(q)) or np.any(q < 0):
        raise InvalidPotential("potential samples must be finite and non-negative")
    h = grid.spacing
    r = grid.nodes
    n = grid.n_dim
    centrifugal = 0.25 * (n - 1) * (n - 3) / r**2
    diag = 2.0 / h**2 + q + centrifugal
    off = np.full(grid.N - 1, -1.0 / h**2)
    return DiscreteOperator(grid=grid, q_values=q, diag=diag, offdiag=off)


@dataclass(eq=False)
class GroundState:
    grid: RadialGrid
    phi: np.ndarray
    E0: float
    u: np.ndarray  # Liouville-space vector, h * sum u^2 = 1
    residual: float
    iterations: int
    operator: Optional[DiscreteOperator] = None

    @property
    def mu_weights(self) -> np.ndarray:
        return self.phi**2 * self.grid.weights

    def to_csv(self, path):
        rows = zip(self.grid.nodes, self.phi, self.phi**2, self.grid.weights)
        atomic_write_text(path, format_csv_rows(["r", "phi", "phi_sq", "weight"], rows))


def _banded(op: DiscreteOperator, shift: float) -> np.ndarray:
    ab = np.zeros((3, op.grid.N))
    ab[0, 1:] = op.offdiag
    ab[1] = op.diag - shift
    ab[2, :-1] = op.offdiag
    return ab


def ground_state(op: DiscreteOperator, tol: float = 1e-12, max_iter: int = 2000) -> GroundState:
    """Lowest eigenpair by inverse iteration from the positive constant vector.

    The shift sits one unit below the Gershgorin lower bound, so A - shift is a
    diagonally dominant M-matrix: every solve maps positive vectors to positive
    vectors and keeps small entries to full relative accuracy.  Iteration stops
    once the vector stagnates; convergence is then judged by the residual
    ||A u - E0 u|| <= tol * ||A||_inf ||u||.
    """
    grid = op.grid
    h = grid.spacing
    shift = op.gershgorin_lower - 1.0
    ab = _banded(op, shift)
    u = np.ones(grid.N)
    u /= math.sqrt(h * np.dot(u, u))
    norm_A = float(np.max(np.abs(op.diag) + 2 * np.abs(np.r_[op.offdiag, 0.0])))
    E0 = math.nan
    it = 0
    for it in range(1, max_iter + 1):
        v = solve_banded((1, 1), ab, u, check_finite=False)
        v /= math.sqrt(h * np.dot(v, v))
        delta = float(np.max(np.abs(v - u) / np.maximum(np.abs(v), 1e-300)))
        u = v
        if delta < 1e-13:
            break
    Au = op.matvec(u)
    E0 = float(np.dot(u, Au) / np.dot(u, u))
    res = float(np.linalg.norm(Au - E0 * u) / np.linalg.norm(u))
    if res > tol * norm_A and res > 1e-9 * max(1.0, abs(E0)):
        raise ConvergenceError(f"inverse iteration residual {res:.3e} after {it} steps")
    if np.any(u <= 0):
        if np.all(u <= 0):
            u = -u
        else:
            raise SignError("converged vector changes sign; not the ground state")
    phi = u / grid.liouville
    # h sum u^2 = 1 is exactly sum phi^2 w = 1
    return GroundState(grid=grid, phi=phi, E0=E0, u=u, residual=res, iterations=it, operator=op)


@dataclass(eq=False)
class Spectrum:
    """Lowest K eigenpairs; ``vectors`` are weighted-orthonormal psi-space modes (K x N)."""

    eigenvalues: np.ndarray
    vectors: np.ndarray
    U: np.ndarray  # Liouville-space orthonormal columns (N x K), sum U^2 = 1
    grid: RadialGrid
    operator: DiscreteOperator

    @property
    def n_dim(self) -> int:
        return self.grid.n_dim

    @property
    def K(self) -> int:
        return int(self.eigenvalues.size)

    def gram(self) -> np.ndarray:
        w = self.grid.weights
        return (self.vectors * w) @ self.vectors.T

    def to_csv(self, path):
        rows = ((j, lam) for j, lam in enumerate(self.eigenvalues))
        atomic_write_text(path, format_csv_rows(["index", "eigenvalue"], rows))


def eigenpairs(op: DiscreteOperator, K: Optional[int] = None, tol: float = 1e-8) -> Spectrum:
    """First K eigenpairs via LAPACK's tridiagonal solver."""
    N = op.grid.N
    K = N if K is None else int(K)
    if not 1 <= K <= N:
        raise DomainError(f"K must lie in [1, {N}]")
    try:
        lam, U = eigh_tridiagonal(op.diag, op.offdiag, select="i", select_range=(0, K - 1))
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(str(exc)) from exc
    # sign convention: positive first node entry (the ground state is then positive)
    signs = np.sign(U[0, :])
    signs[signs == 0] = 1.0
    U = U * signs
    if np.any(np.diff(lam) <= tol * max(1.0, abs(lam[0]))):
        raise ConvergenceError("eigenvalues not simple within tolerance")
    h = op.grid.spacing
    vectors = (U / (op.grid.liouville[:, None] * math.sqrt(h))).T
    return Spectrum(eigenvalues=lam, vectors=vectors, U=U, grid=op.grid, operator=op)


def mode_log_profile(op: DiscreteOperator, lam: float):
    """Eigenvector for eigenvalue ``lam`` by backward recurrence from R_max.

    Returns (log|u|, sign) in Liouville space, normalized so h sum u^2 = 1.
    Marching inward from the Dirichlet end follows the dominant solution in
    the classically forbidden region, so tiny tail entries keep full relative
    accuracy (unlike an orthogonal eigensolver whose error is absolute).
    """
    N = op.grid.N
    h2 = op.grid.spacing ** 2
    d = op.diag
    logabs = np.empty(N)
    sign = np.empty(N)
    logabs[-1] = 0.0
    sign[-1] = 1.0
    inv_rho = 0.0  # u_{i+1}/u_i
    for i in range(N - 1, 0, -1):
        # u_{i-1} = h^2 (d_i - lam) u_i - u_{i+1}
        rho = h2 * (d[i] - lam) - inv_rho  # u_{i-1}/u_i
        if rho == 0.0:
            rho = 1e-300
        logabs[i - 1] = logabs[i] + math.log(abs(rho))
        sign[i - 1] = sign[i] * (1.0 if rho > 0 else -1.0)
        inv_rho = 1.0 / rho
    # normalize: h sum u^2 = 1
    lmax = float(np.max(logabs))
    lnorm = lmax + 0.5 * math.log(h2**0.5 * float(np.sum(np.exp(2 * (logabs - lmax)))))
    logabs -= lnorm
    if sign[0] < 0:
        sign = -sign
    return logabs, sign


def richardson_ratio(grid: RadialGrid, q_func, tol: float = 1e-12):
    """E0 on grids with h, h/2, h/4 and the ratio of successive differences.

    A second-order stencil gives a ratio near 4; the accepted window is [3.5, 4.5].
    """
    E = []
    for level in range(3):
        N = (grid.N + 1) * 2**level - 1
        g = RadialGrid(grid.n_dim, grid.R_max, N)
        op = assemble_operator(g, q_func(g.nodes))
        E.append(ground_state(op, tol).E0)
    d1, d2 = E[0] - E[1], E[1] - E[2]
    ratio = d1 / d2 if d2 != 0 else math.inf
    return {"E0": E, "ratio": ratio, "in_window": bool(3.5 <= ratio <= 4.5)}
