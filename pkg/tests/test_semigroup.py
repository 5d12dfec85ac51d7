import math

import numpy as np
import pytest

from iucert import semigroup as sg
from iucert.discretize import eigenpairs
from iucert.errors import ContractionViolation


def test_propagate_ground_state(small):
    grid, op, gs, sp = small
    for method in ("expm", "spectral"):
        out = sg.propagate(sp, gs.phi, 0.3, method=method)
        assert np.max(np.abs(out / gs.phi - math.exp(-0.3 * gs.E0))) < 1e-10


def test_propagate_t0_is_identity(small):
    grid, op, gs, sp = small
    u = np.exp(-grid.nodes)
    assert np.allclose(sg.propagate(sp, u, 0.0, method="spectral"), u, rtol=1e-10, atol=1e-12)


def test_semigroup_law(small, rng):
    grid, op, gs, sp = small
    u = rng.random(grid.N)
    for method in ("expm", "spectral"):
        two = sg.propagate(sp, sg.propagate(sp, u, 0.1, method), 0.25, method)
        one = sg.propagate(sp, u, 0.35, method)
        assert np.max(np.abs(two - one)) <= 1e-9 * np.max(np.abs(one))


def test_expm_matches_spectral(small, rng):
    grid, op, gs, sp = small
    u = rng.random(grid.N)
    a = sg.propagate(sp, u, 0.2, "expm")
    b = sg.propagate(sp, u, 0.2, "spectral")
    assert np.max(np.abs(a - b)) < 1e-10 * np.max(np.abs(b))


def test_propagate_scaled_survives_underflow(small):
    grid, op, gs, sp = small
    y, log_scale = sg.propagate_scaled(sp, gs.phi, 500.0)
    assert log_scale == pytest.approx(-500.0 * sp.eigenvalues[0])
    assert np.allclose(y, gs.phi, rtol=1e-8)


def test_weighted_propagate_constants_and_linearity(small, rng):
    grid, op, gs, sp = small
    t = 0.4
    out = sg.weighted_propagate(gs, sp, np.ones(grid.N), t)
    assert np.max(np.abs(out - math.exp(-t * gs.E0))) < 1e-10
    u, w = rng.random(grid.N), rng.standard_normal(grid.N)
    lhs = sg.weighted_propagate(gs, sp, 2.0 * u - 3.0 * w, t)
    rhs = 2.0 * sg.weighted_propagate(gs, sp, u, t) - 3.0 * sg.weighted_propagate(gs, sp, w, t)
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * np.max(np.abs(lhs)) + 1e-14
    assert np.all(sg.weighted_propagate(gs, sp, u, t) > 0)


def test_lp_mu_norm(small, rng):
    grid, op, gs, sp = small
    one = np.ones(grid.N)
    for p in (1, 2, 3.5, math.inf):
        assert sg.lp_mu_norm(gs, one, p) == pytest.approx(1.0, rel=1e-12)
    inv = 1.0 / gs.phi
    assert sg.lp_mu_norm(gs, inv, 2) ** 2 == pytest.approx(np.sum(grid.weights), rel=1e-12)
    u = rng.standard_normal(grid.N)
    norms = [sg.lp_mu_norm(gs, u, p) for p in (1, 1.5, 2, 4, 8, math.inf)]
    assert all(a <= b * (1 + 1e-12) for a, b in zip(norms, norms[1:]))


def test_contraction_report(small, rng):
    grid, op, gs, sp = small
    rep = sg.contraction_report(gs, sp, np.ones(grid.N), 0.5)
    inf_row = [r for r in rep["ratios"] if r["p"] == "inf"][0]
    assert inf_row["ratio"] == pytest.approx(math.exp(-0.5 * gs.E0), rel=1e-10)
    u = rng.standard_normal(grid.N)
    rep = sg.contraction_report(gs, sp, u, 0.1)
    assert rep["ok"] and rep["split_l1"]["ok"]
    assert rep["split_l1"]["out"] <= rep["split_l1"]["input"] * (1 + 1e-9)


def test_contraction_violation_raised(small):
    grid, op, gs, sp = small
    with pytest.raises(ContractionViolation):
        sg.contraction_report(gs, sp, np.ones(grid.N), 0.5, tol=-0.5)


def test_positivity(small):
    grid, op, gs, sp = small
    spike = np.zeros(grid.N)
    spike[3] = 1.0
    assert sg.positivity_check(sp, spike, 0.05)
    assert sg.positivity_check(sp, gs.phi, 0.05)


def test_heat_kernel_identities(small, rng):
    grid, op, gs, sp = small
    t = 0.3
    K = sg.heat_kernel(sp, t)
    k = K.values
    assert np.max(np.abs(k - k.T)) <= 1e-13 * np.max(np.abs(k))
    u = rng.random(grid.N)
    assert np.max(np.abs(K.apply(u) - sg.propagate(sp, u, t))) < 1e-10 * np.max(np.abs(K.apply(u)))
    trace = np.sum(np.diag(k) * grid.weights)
    assert trace == pytest.approx(np.sum(np.exp(-sp.eigenvalues * t)), rel=1e-10)


def test_kernel_ratio_large_t(small):
    grid, op, gs, sp = small
    t = 20.0
    ratio = sg.kernel_iu_ratio(gs, sg.heat_kernel(sp, t))
    assert ratio == pytest.approx(math.exp(-gs.E0 * t), rel=1e-6)


def test_kernel_ratio_refinement(q1):
    from iucert import potentials as pt
    from iucert.discretize import RadialGrid, assemble_operator, ground_state
    t = 0.5
    vals = []
    for N in (300, 600):
        g = RadialGrid(3, q1.R_max, N)
        op = assemble_operator(g, pt.Q_array(q1.spec, g.nodes))
        vals.append(sg.log_kernel_iu_ratio(ground_state(op), sg.heat_kernel(eigenpairs(op, K=1), t)))
    assert abs(math.expm1(vals[1] - vals[0])) < 0.05


def test_kernel_write(tmp_path, small):
    from iucert.io import read_kernel_binary
    grid, op, gs, sp = small
    K = sg.heat_kernel(sp, 0.5)
    K.write(tmp_path / "k.bin", tmp_path / "k.csv", gs)
    mat, t, KK, ls = read_kernel_binary(tmp_path / "k.bin")
    assert np.array_equal(mat, K.scaled) and t == 0.5 and ls == K.log_scale
    assert (tmp_path / "k.csv").read_text().startswith("index,r,k_diag,row_mass,row_max_ratio")


def test_dirichlet_form(small, rng):
    grid, op, gs, sp = small
    w, v = rng.random(grid.N), rng.random(grid.N)
    assert sg.dirichlet_form(gs, np.ones(grid.N), v) == 0.0
    # against the operator: <(H~ - E0) w, v>_mu with H~ w = phi^{-1} H (phi w)
    u = gs.u
    Aw = op.matvec(u * w) / u - gs.E0 * w
    ref = float(np.sum(Aw * v * u**2 * grid.spacing))
    assert sg.dirichlet_form(gs, w, v) == pytest.approx(ref, rel=1e-6)
    assert sg.dirichlet_form(gs, w, w) >= 0


def test_log_sobolev_constant_input(small):
    grid, op, gs, sp = small
    t, p, beta = 0.2, 4.0, 1.5
    c = math.exp(-t * gs.E0)
    res = sg.log_sobolev_residual(gs, sp, np.ones(grid.N), t, 0.1, p, beta)
    assert res == pytest.approx((2 * beta / p) * c**p, rel=1e-8)
    res2 = sg.log_sobolev_residual(gs, sp, np.ones(grid.N), t, 0.1, p, beta + 1)
    assert res2 > res


def test_calibrate_log_sobolev_makes_residuals_nonnegative(small, rng):
    grid, op, gs, sp = small
    beta0 = lambda eps: 0.0
    samples = [(rng.random(grid.N), 0.1, eps, p) for eps in (0.05, 0.5) for p in (2.0, 8.0)]
    C, rows = sg.calibrate_log_sobolev(gs, sp, beta0, samples)
    assert len(rows) == 4
    for u0, t, eps, p in samples:
        assert sg.log_sobolev_residual(gs, sp, u0, t, eps, p, C) >= -1e-12
