"""Acceptance criteria 1-10, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they are
produced; they are also collected in the terminal summary.
"""
import math
import time

import mpmath as mp
import numpy as np
import pytest
from scipy import integrate

from iucert import iu, rosen
from iucert import pipeline as pl
from iucert import potentials as pt
from iucert import semigroup as sg
from iucert import specialfn as sf
from iucert.discretize import RadialGrid, assemble_operator, eigenpairs, ground_state

SQRT2 = math.sqrt(2)
A_LO = 0.5 * math.log(2)


def test_c1_eigensolver_oracle(verdict):
    t0 = time.perf_counter()
    grid = RadialGrid(3, 12.0, 2400)
    gs = ground_state(assemble_operator(grid, grid.nodes**2))
    elapsed = time.perf_counter() - t0
    r = grid.nodes
    ref = np.exp(-r**2 / 2)
    ref /= math.sqrt(np.sum(ref**2 * grid.weights))
    sup = float(np.max(np.abs(gs.phi - ref)[r <= 8]))
    ok = abs(gs.E0 - 3.0) <= 2e-3 and sup <= 1e-3 and elapsed < 10
    verdict(1, ok, f"E0={gs.E0:.6f} sup|phi-ref|={sup:.2e} runtime={elapsed:.2f}s")
    assert ok


def test_c2_radial_inequality(verdict):
    lower = 2 - 1 / SQRT2
    parts, ok = [], True
    for name, spec in (("Q1 a=3", pt.PotentialSpec.power(3)), ("Q1 a=4", pt.PotentialSpec.power(4)),
                       ("Q2 a=3", pt.PotentialSpec.log_power(3))):
        grid = RadialGrid(3, pt.decay_radius(spec), 600)
        R, rep = rosen.verify_radial_inequality(spec, grid)
        good = rep["factor_ge_bound"] and rep["factor_min"] >= lower and rep["fd_max_rel_diff"] < 1e-6
        ok &= good
        parts.append(f"{name}: R_ineq={R:.3g} min={rep['factor_min']:.4f} fd={rep['fd_max_rel_diff']:.1e}")
    verdict(2, ok, "; ".join(parts))
    assert ok


def test_c3_rosen_certificates(q1, q2, verdict):
    eps = (1.0, 0.3, 0.1, 0.03, 0.01)
    parts, ok = [], True
    for name, s in (("Q1 a=4 k=2", q1), ("Q2 a=3 k=1.1", q2)):
        cert = s.cert
        got = sorted(e["eps"] for e in cert.entries)
        worst = min(e["min_margin"] for e in cert.entries)
        dominated = all(e["gamma"] >= e["gamma_emp"] for e in cert.entries)
        good = cert.valid and got == sorted(eps) and worst >= 0 and dominated
        ok &= good
        parts.append(f"{name}: min margin={worst:.3g} gamma>=gamma_emp={dominated}")
    verdict(3, ok, "; ".join(parts))
    assert ok


def _T_mpmath(sw):
    """(sqrt2/d) int_{ln2/2}^inf 1/f for m = 1, with f evaluated pointwise from q."""
    mp.mp.dps = 30
    k, r0 = mp.mpf(sw.k), mp.mpf(sw.r0)
    head = mp.quad(lambda q: 1 / (r0**k * mp.exp(q / r0 - 1)), [A_LO, r0])
    # q = e^y: the tail becomes a smooth exponentially decaying integrand
    y0 = mp.log(r0)
    tail = mp.quad(lambda y: mp.exp(y) / mp.exp(y) ** k, [y0, y0 + 10, y0 + 100, mp.inf])
    return float(SQRT2 / sw.d * (head + tail))


def test_c4_horizon_and_gamma_oracles(q1, q2, verdict):
    parts, ok = [], True
    for name, s in (("Q1", q1), ("Q2", q2)):
        sw = s.sandwich
        closed = iu.horizon_T_closed(sw)
        quad = iu.horizon_T_quadrature(sw)
        oracle = _T_mpmath(sw)
        rel = max(abs(quad - closed), abs(oracle - closed)) / closed
        ok &= rel <= 1e-8
        parts.append(f"{name} T={closed:.10g} rel={rel:.1e}")
    worst = 0.0
    for f in (0.25, 0.5, 1.0):
        res = iu.gamma_term_integral(q1.sandwich, f * q1.T, q1.T)
        worst = max(worst, abs(res["scaled"] / SQRT2 - 1))
    ok &= worst <= 1e-6
    parts.append(f"gamma identity rel={worst:.1e}")
    verdict(4, ok, "; ".join(parts))
    assert ok


def test_c5_schedule_identities(q1, verdict):
    sw, T, C = q1.sandwich, q1.T, q1.cert.C_used
    worst_int = worst_G = worst_ode = 0.0
    p_start_exact = True
    for t in (0.25 * T, T):
        ch = iu._Chain(sw, 3, C, 0.0, t, iu.xi_of_t(sw, t, T))
        kink = 2 * (sw.r0 - ch.xi)
        pts = [iu.V_LO] + ([kink] if kink > iu.V_LO else [])
        total = sum(integrate.quad(ch.eps, a, b, epsabs=0, epsrel=1e-12, limit=400)[0]
                    for a, b in zip(pts, pts[1:] + [np.inf]))
        worst_int = max(worst_int, abs(total / t - 1))
        p0, _, N0 = iu.schedule_at(sw, t, 0.0, 3, C, 0.0, T)
        p_start_exact &= p0 == 2.0 and N0 == 0.0
        samples = [float(s) for s in iu.sample_times(t) if ch.reachable(float(s))]
        assert len(samples) == 64
        for s in samples:
            worst_G = max(worst_G, abs(ch.G(ch.v_of_s(s)) - s) / t)
        h = 1e-6 * t
        for s in np.linspace(0.01 * t, 0.95 * t, 200):
            v0 = ch.v_of_s(s)
            if v0 > 600:
                continue
            dp = (math.exp(ch.v_of_s(s + h)) - math.exp(ch.v_of_s(s - h))) / (2 * h)
            rhs = math.exp(v0) / ch.eps(v0)
            worst_ode = max(worst_ode, abs(dp - rhs) / rhs)
    ok = worst_int <= 1e-8 and p_start_exact and worst_G <= 1e-9 and worst_ode < 1e-4
    verdict(5, ok, f"int eps/p rel={worst_int:.1e} p(0)=2:{p_start_exact} G(p)-s={worst_G:.1e} "
                   f"ODE={worst_ode:.1e}")
    assert ok


def test_c6_contraction(q1, verdict):
    gs, sp = q1.gs, q1.spectrum
    rng = np.random.default_rng(6)
    inputs = [rng.random(q1.grid.N) for _ in range(50)] + [rng.standard_normal(q1.grid.N) for _ in range(50)]
    worst, worst_inf, ok = 0.0, 0.0, True
    for t in (0.1, 1.0):
        bound = math.exp(-t * gs.E0)
        for u0 in inputs:
            out = sg.weighted_propagate(gs, sp, u0, t)
            for p in (1, 2, math.inf):
                ratio = sg.lp_mu_norm(gs, out, p) / sg.lp_mu_norm(gs, u0, p)
                worst = max(worst, ratio)
                ok &= ratio <= 1 + 1e-9
                if p == math.inf and np.all(u0 >= 0):
                    worst_inf = max(worst_inf, ratio / bound)
                    ok &= ratio <= bound * (1 + 1e-9)
    verdict(6, ok, f"max ratio={worst:.6f} max (inf ratio)/e^(-tE0) for u0>=0: {worst_inf:.6f}")
    assert ok


def test_c7_positivity_improving(q1, verdict):
    N = q1.grid.N
    rng = np.random.default_rng(7)
    inputs = []
    for i in np.linspace(0, N - 1, 25).astype(int):
        u = np.zeros(N)
        u[i] = 1.0
        inputs.append(u)
    for _ in range(25):
        a, b = sorted(rng.choice(N, 2, replace=False))
        u = np.zeros(N)
        u[a:b + 1] = 1.0
        inputs.append(u)
    fails = sum(not sg.positivity_check(q1.spectrum, u, t) for t in (0.01, 0.1, 1.0) for u in inputs)
    ok = fails == 0
    verdict(7, ok, f"{len(inputs)} inputs x 3 times, non-positive outputs: {fails}")
    assert ok


@pytest.mark.slow
def test_c8_iu_bound(q1, verdict):
    sw, T, C = q1.sandwich, q1.T, q1.cert.C_used
    times = (0.25, 0.5, 1.0, T, 1.5 * T)
    tests = pl.test_functions(q1.grid, q1.gs.phi)
    C_LS, _ = sg.calibrate_log_sobolev(
        q1.gs, q1.spectrum, lambda e: iu.beta_of_eps(e, 3, sw, C, 0.0, gamma_scale=iu.M_GAMMA_SCALE),
        pl.ls_samples(sw, 3, C, q1.grid, times, T))
    fine = RadialGrid(3, q1.R_max, 2 * q1.grid.N)
    fine_op = assemble_operator(fine, pt.Q_array(q1.spec, fine.nodes))
    fine_gs, fine_sp = ground_state(fine_op), eigenpairs(fine_op)
    ok, parts = True, []
    for t in times:
        sch = iu.build_schedule(sw, 3, C, C_LS, t, T=T)
        cert = iu.iu_certificate(q1.gs, q1.spectrum, sch.M, t, tests, kernel=True, raise_on_violation=False)
        lk_fine = sg.log_kernel_iu_ratio(fine_gs, sg.heat_kernel(fine_sp, t))
        drift = abs(math.expm1(lk_fine - cert["kernel_log_ratio"]))
        ok &= cert["ok"] and cert["kernel_ok"] and drift < 0.05
        parts.append(f"t={t:.4g}: lnC=M={sch.M:.4g} (ln M={sch.log_M:.4g}) worst={cert['worst_log_ratio']:.4g} "
                     f"kernel={cert['kernel_log_ratio']:.4g} drift={drift:.1e}")
    verdict(8, ok, f"C_LS={C_LS:.3g}; " + "; ".join(parts))
    assert ok


def test_c9_negative_control(verdict):
    ho = iu.negative_control(R_list=(6.0, 9.0, 12.0), potential="harmonic")
    quart = iu.negative_control(R_list=(6.0, 9.0, 12.0), potential="quartic")
    ho_ok = ho["strictly_increasing"] and ho["growth"] > 10
    quart_ok = quart["relative_variation"] < 0.10
    ratios = lambda nc: ", ".join(f"{r['ratio']:.4g}" for r in nc["rows"])
    ok = ho_ok and quart_ok
    verdict(9, ok, f"r^2 ratios [{ratios(ho)}] increasing={ho['strictly_increasing']} growth={ho['growth']:.3g} "
                   f"(need >10); r^4 ratios [{ratios(quart)}] variation={quart['relative_variation']:.1%} "
                   f"(need <10%)")
    assert ok


def test_c10_young_property(verdict):
    rng = np.random.default_rng(10)
    params = [sf.AuxParams(2.0, 1, 1.0), sf.AuxParams(1.1, 1, 0.7), sf.AuxParams(1.5, 2, 3.0)]
    a = np.exp(rng.uniform(-12, 12, 10_000))
    b = np.exp(rng.uniform(-12, 12, 10_000))
    violations = sum(sf.young_bound(params[i % 3], float(x), float(y)) < x * y
                     for i, (x, y) in enumerate(zip(a, b)))
    ok = violations == 0
    verdict(10, ok, f"10000 pairs, violations: {violations}")
    assert ok
