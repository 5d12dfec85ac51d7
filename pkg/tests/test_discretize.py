import math
import time
import warnings

import numpy as np
import pytest
from scipy.linalg import eigh

from iucert.discretize import (RadialGrid, assemble_operator, eigenpairs, ground_state, mode_log_profile,
                               richardson_ratio)
from iucert.errors import DiscretizationWarning, DomainError, InvalidPotential


def test_grid_contract():
    g = RadialGrid(3, 10.0, 99)
    assert g.spacing == pytest.approx(0.1)
    assert g.nodes[0] == pytest.approx(0.1) and g.nodes[-1] == pytest.approx(9.9)
    with pytest.raises(DomainError):
        RadialGrid(2, 10.0, 99)
    with pytest.warns(DiscretizationWarning):
        RadialGrid(3, 10.0, 8)


def test_free_laplacian_spectrum():
    g = RadialGrid(3, 5.0, 199)
    op = assemble_operator(g, np.zeros(g.N))
    h = g.spacing
    j = np.arange(1, g.N + 1)
    exact = np.sort((2 - 2 * np.cos(j * math.pi * h / g.R_max)) / h**2)
    assert eigenpairs(op).eigenvalues == pytest.approx(exact, rel=1e-10, abs=1e-10)


def test_centrifugal_term():
    g3 = RadialGrid(3, 5.0, 49)
    op3 = assemble_operator(g3, np.zeros(49))
    assert np.allclose(op3.diag, 2 / g3.spacing**2)
    # n = 5: (4*2)/4 / r^2 = 2 at r = 1
    g5 = RadialGrid(5, 5.0, 49)  # node 10 sits at r = 1.0
    op5 = assemble_operator(g5, np.zeros(49))
    assert op5.diag[9] - 2 / g5.spacing**2 == pytest.approx(2.0)


def test_assemble_rejects_bad_q():
    g = RadialGrid(3, 5.0, 49)
    with pytest.raises(InvalidPotential):
        assemble_operator(g, -np.ones(49))
    with pytest.raises(InvalidPotential):
        assemble_operator(g, np.ones(10))


def test_harmonic_oscillator_ground_state(ho):
    grid, op, gs = ho
    assert gs.E0 == pytest.approx(3.0, abs=2e-3)
    r = grid.nodes
    ref = np.exp(-r**2 / 2)
    ref /= math.sqrt(np.sum(ref**2 * grid.weights))
    mask = r <= 8
    assert np.max(np.abs(gs.phi[mask] - ref[mask])) < 1e-3
    assert np.all(gs.phi > 0)


def test_harmonic_spectrum_spacing(ho):
    grid, op, gs = ho
    sp = eigenpairs(op, K=4)
    # radial l = 0 oscillator: E = 3 + 4j
    assert sp.eigenvalues == pytest.approx([3.0, 7.0, 11.0, 15.0], abs=1e-2)
    assert np.allclose(sp.gram(), np.eye(4), atol=1e-8)
    sp1 = eigenpairs(op, K=1)
    assert sp1.eigenvalues[0] == pytest.approx(gs.E0, rel=1e-10)
    assert np.max(np.abs(sp1.vectors[0] - gs.phi)) < 1e-8 * np.max(gs.phi)


def test_free_dirichlet_limit():
    R = 3.0
    E = []
    for N in (99, 399):
        g = RadialGrid(3, R, N)
        E.append(ground_state(assemble_operator(g, np.zeros(N))).E0)
    exact = (math.pi / R) ** 2
    assert abs(E[1] - exact) < abs(E[0] - exact)
    assert E[1] == pytest.approx(exact, rel=1e-4)


def test_quartic_against_dense_solver():
    g = RadialGrid(3, 4.0, 150)
    op = assemble_operator(g, g.nodes**4)
    dense = eigh(op.dense(), eigvals_only=True)[0]
    assert ground_state(op).E0 == pytest.approx(dense, rel=1e-10)


def test_mode_log_profile_matches_eigenvector():
    g = RadialGrid(3, 6.0, 300)
    op = assemble_operator(g, g.nodes**2)
    sp = eigenpairs(op, K=2)
    for j in range(2):
        la, sign = mode_log_profile(op, sp.eigenvalues[j])
        u = sign * np.exp(la)
        ref = sp.U[:, j] / math.sqrt(g.spacing)
        ref *= np.sign(ref[0])
        assert np.max(np.abs(u - ref)) < 1e-6


def test_richardson_ratio_near_four():
    g = RadialGrid(3, 6.0, 63)
    rr = richardson_ratio(g, lambda r: r**2)
    assert rr["in_window"]
    assert rr["ratio"] == pytest.approx(4.0, abs=0.5)


def test_ground_state_runtime(ho):
    grid, op, _ = ho
    t0 = time.perf_counter()
    ground_state(op)
    assert time.perf_counter() - t0 < 10.0
