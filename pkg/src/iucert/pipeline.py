"""Stage orchestration: potentials -> discretize -> rosen -> semigroup -> iu.

Each stage appends to a report dict; failures are recorded with the stage
name, and the exit code is that of the first failing stage in pipeline order.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import iu
from . import potentials as pt
from . import rosen
from . import semigroup as sg
from .config import RunConfig
from .discretize import RadialGrid, assemble_operator, eigenpairs, ground_state, richardson_ratio
from .errors import (ConfigError, ConvergenceError, DiscretizationWarning, DomainError, InvalidPotential,
                     NotSatisfiable, QuadratureError, SandwichViolation, TruncationWarning)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_POTENTIAL = 2
EXIT_CONFIG = 3
EXIT_ROSEN = 4
EXIT_IU = 5
EXIT_SEMIGROUP = 6

# pipeline order decides which failure sets the exit code
STAGES = (("config", EXIT_CONFIG), ("potential", EXIT_POTENTIAL), ("discretize", EXIT_ROSEN),
          ("rosen", EXIT_ROSEN), ("semigroup", EXIT_SEMIGROUP), ("iu", EXIT_IU))

LS_P_MAX = 64.0  # log-Sobolev calibration uses exponents p <= 64
SEED = 20240611


def exit_code(failures) -> int:
    for stage, code in STAGES:
        if stage in failures:
            return code
    return EXIT_OK


def build_spec(cfg: RunConfig) -> pt.PotentialSpec:
    try:
        if cfg.family == "power":
            return pt.PotentialSpec.power(cfg.alpha)
        if cfg.family == "log":
            return pt.PotentialSpec.log_power(cfg.alpha)
        if cfg.family == "loglog":
            return pt.PotentialSpec.loglog_power(cfg.alpha)
        if cfg.family == "iterated":
            return pt.PotentialSpec.iterated(cfg.alpha, cfg.l)
        return pt.PotentialSpec.from_csv(cfg.table)
    except OSError as exc:
        raise ConfigError(f"cannot read potential table: {exc}") from exc


def check_conditions(cfg: RunConfig, spec: pt.PotentialSpec) -> pt.ConditionReport:
    return pt.check_theorem_conditions(spec, 1.0, cfg.k_value, cfg.m_value, r_max=cfg.r_max,
                                       log_r_max=cfg.log_r_max)


def test_functions(grid: RadialGrid, phi: np.ndarray):
    """Fixed, seeded battery: phi, constants, a spike, a Gaussian, signed and complex noise."""
    rng = np.random.default_rng(SEED)
    r = grid.nodes
    spike = np.zeros(grid.N)
    spike[min(5, grid.N - 1)] = 1.0
    return [
        ("phi", phi.copy()),
        ("ones", np.ones(grid.N)),
        ("spike", spike),
        ("gaussian", np.exp(-r**2)),
        ("signed", rng.standard_normal(grid.N)),
        ("complex", rng.standard_normal(grid.N) + 1j * rng.standard_normal(grid.N)),
    ]


def contraction_inputs(grid: RadialGrid):
    rng = np.random.default_rng(SEED + 1)
    return [("ones", np.ones(grid.N)), ("uniform", rng.random(grid.N)),
            ("signed", rng.standard_normal(grid.N))]


def ls_samples(sandwich, n_dim, C_rosen, grid, times, T, stride=8):
    """(u0, s, eps_t(p(s)), p(s)) pairs along the schedules, restricted to p <= LS_P_MAX."""
    rng = np.random.default_rng(SEED + 2)
    inputs = [np.ones(grid.N), rng.random(grid.N), np.exp(-grid.nodes**2)]
    out = []
    for t in times:
        tr, _ = iu.reduce_time(t, T)
        ch = iu._Chain(sandwich, n_dim, C_rosen, 0.0, tr, iu.xi_of_t(sandwich, tr, T))
        for s in iu.sample_times(tr)[::stride]:
            v = ch.v_of_s(float(s))
            if v > math.log(LS_P_MAX):
                continue
            for u0 in inputs:
                out.append((u0, float(s), ch.eps(v), math.exp(v)))
    return out


@dataclass
class RunState:
    cfg: RunConfig
    report: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    spec: Optional[pt.PotentialSpec] = None
    conditions: Optional[pt.ConditionReport] = None
    grid: Optional[RadialGrid] = None
    q_nodes: Optional[np.ndarray] = None
    op: object = None
    gs: object = None
    spectrum: object = None
    sandwich: Optional[pt.SandwichParams] = None
    rosen_cert: object = None
    T: Optional[float] = None
    times: list = field(default_factory=list)
    schedules: dict = field(default_factory=dict)
    kernels: dict = field(default_factory=dict)

    def fail(self, stage, message):
        log.warning("%s stage failed: %s", stage, message)
        self.failures.setdefault(stage, []).append(str(message))

    @property
    def exit_code(self) -> int:
        return exit_code(self.failures)

    @property
    def harmonic(self) -> bool:
        return self.cfg.q_mode == "harmonic"


def _q_func(state: RunState):
    if state.harmonic:
        return lambda r: np.asarray(r, dtype=float) ** 2
    spec = state.spec
    return lambda r: pt.Q_array(spec, r)


def stage_potential(state: RunState) -> bool:
    cfg = state.cfg
    try:
        state.spec = build_spec(cfg)
    except InvalidPotential as exc:
        state.fail("potential", exc)
        return False
    state.report["potential"] = state.spec.describe()
    try:
        state.conditions = check_conditions(cfg, state.spec)
    except NotSatisfiable as exc:
        state.report["conditions"] = exc.report.to_dict() if exc.report is not None else None
        state.fail("potential", exc)
        return False
    except DomainError as exc:
        state.fail("potential", exc)
        return False
    state.report["conditions"] = state.conditions.to_dict()
    return True


def stage_discretize(state: RunState) -> bool:
    cfg = state.cfg
    try:
        R_max = cfg.R_max if cfg.R_max is not None else pt.decay_radius(state.spec)
    except DomainError as exc:
        state.fail("discretize", exc)
        return False
    qf = _q_func(state)
    rep = {"n_dim": cfg.n_dim, "N": cfg.N, "R_max": R_max, "warnings": []}
    state.report["discretize"] = rep
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            grid = RadialGrid(cfg.n_dim, R_max, cfg.N)
            q = np.asarray(qf(grid.nodes), dtype=float)
            op = assemble_operator(grid, q)
            gs = ground_state(op, tol=cfg.tol_ground_state)
            spectrum = eigenpairs(op, cfg.K)
        except (ConvergenceError, InvalidPotential, DomainError) as exc:
            state.fail("discretize", exc)
            return False
        if grid.coarse:
            rich = richardson_ratio(grid, qf, cfg.tol_ground_state)
            rep["richardson"] = rich
            if not rich["in_window"]:
                rep["warnings"].append(f"discretization sensitivity: Richardson ratio {rich['ratio']:.4g} "
                                       "outside [3.5, 4.5]")
    for w in caught:
        msg = f"{w.category.__name__}: {w.message}"
        if issubclass(w.category, (DiscretizationWarning, TruncationWarning)) and msg not in rep["warnings"]:
            rep["warnings"].append(msg)
    state.grid, state.q_nodes, state.op, state.gs, state.spectrum = grid, q, op, gs, spectrum
    rep.update(h=grid.spacing, E0=gs.E0, residual=gs.residual, iterations=gs.iterations, K=spectrum.K,
               eigenvalues_head=[float(x) for x in spectrum.eigenvalues[:5]],
               phi_min=float(np.min(gs.phi)), phi_positive=bool(np.all(gs.phi > 0)))
    return True


def stage_rosen(state: RunState) -> bool:
    cfg, rep = state.cfg, state.conditions
    try:
        d = cfg.d if cfg.d is not None else rosen.auto_d(state.spec, rep.params["k"], rep.params["m"],
                                                           rep.log_R_m, rep.r0, state.grid.nodes, state.q_nodes)
        state.sandwich = rep.sandwich(d)
    except (SandwichViolation, DomainError) as exc:
        state.report["rosen"] = {"valid": False, "error": str(exc)}
        if not state.harmonic:
            state.fail("rosen", exc)
        return False
    q_arg = _q_func(state) if state.harmonic else None
    log_r_max = cfg.log_r_max if cfg.log_r_max is not None else math.log(cfg.r_max)
    cert = rosen.rosen_certificate(state.gs, q_arg, state.spec, state.sandwich, cfg.eps_list,
                                   log_r_max=log_r_max)
    state.rosen_cert = cert
    out = cert.to_dict()
    out["d_source"] = "auto" if cfg.d is None else "config"
    state.report["rosen"] = out
    if state.harmonic:
        out["gating"] = False  # q = r^2 is the negative control; the certificate is diagnostic only
        return cert.sandwich_valid
    if not cert.valid:
        state.fail("rosen", "Rosen certificate invalid")
        return False
    return True


def stage_semigroup(state: RunState) -> bool:
    cfg = state.cfg
    try:
        state.T = iu.horizon_T(state.sandwich) if state.sandwich is not None else None
    except QuadratureError as exc:
        state.fail("iu", exc)
        state.T = iu.horizon_T_closed(state.sandwich)
    T = state.T if state.T is not None else 1.0
    state.times = [ts.resolve(T) for ts in cfg.t_list]
    rows = []
    ok = True
    for t in state.times:
        for name, u0 in contraction_inputs(state.grid):
            r = sg.contraction_report(state.gs, state.spectrum, u0, t, tol=cfg.tol_contraction,
                                      raise_on_violation=False)
            r["input"] = name
            rows.append(r)
            ok &= r["ok"]
    spike = np.zeros(state.grid.N)
    spike[0] = 1.0
    t_min = min(state.times)
    positive = sg.positivity_check(state.spectrum, spike, t_min)
    rep = {"contraction": rows, "positivity": {"t": t_min, "input": "boundary spike", "ok": positive},
           "ok": bool(ok and positive)}
    state.report["semigroup"] = rep
    if not rep["ok"]:
        state.fail("semigroup", "contraction or positivity check failed")
    return rep["ok"]


def stage_iu(state: RunState) -> bool:
    cfg = state.cfg
    rep = {}
    state.report["iu"] = rep
    ok = True
    if state.harmonic or (state.rosen_cert is not None and not state.rosen_cert.sandwich_valid):
        # IU fails for q = r^2: the eigenfunction ratios grow without bound
        nc = iu.negative_control(cfg.neg_R_list, potential="harmonic", n_dim=cfg.n_dim)
        rep["negative_control"] = nc
        rep["applicable"] = False
        trend = "unbounded trend" if nc["unbounded_trend"] else (
            "strictly increasing" if nc["strictly_increasing"] else "not increasing")
        state.fail("iu", f"sandwich invalid, no IU constant; negative control ratio {trend}, "
                         f"growth {nc['growth']:.3g} over R_max {list(cfg.neg_R_list)}")
        return False
    sw, n = state.sandwich, cfg.n_dim
    C_rosen = state.rosen_cert.C_used
    if cfg.C_LS is None:
        beta0 = lambda e: iu.beta_of_eps(e, n, sw, C_rosen, 0.0, gamma_scale=iu.M_GAMMA_SCALE)
        samples = ls_samples(sw, n, C_rosen, state.grid, state.times, state.T)
        C_LS, ls_rows = sg.calibrate_log_sobolev(state.gs, state.spectrum, beta0, samples)
        rep["C_LS"] = {"value": C_LS, "source": "calibrated", "n_samples": len(ls_rows),
                       "max_p": LS_P_MAX, "rows": ls_rows}
    else:
        C_LS = cfg.C_LS
        rep["C_LS"] = {"value": C_LS, "source": "config"}
    tests = test_functions(state.grid, state.gs.phi)
    certs = []
    for ts, t in zip(cfg.t_list, state.times):
        try:
            sch = iu.build_schedule(sw, n, C_rosen, C_LS, t, T=state.T)
        except (ConvergenceError, QuadratureError, DomainError) as exc:
            certs.append({"t": t, "label": ts.label(), "ok": False, "error": str(exc)})
            ok = False
            continue
        state.schedules[t] = sch
        c = iu.iu_certificate(state.gs, state.spectrum, sch.M, t, tests, kernel=False,
                              raise_on_violation=False)
        kern = sg.heat_kernel(state.spectrum, t)
        state.kernels[t] = kern
        lk = sg.log_kernel_iu_ratio(state.gs, kern)
        c["kernel_log_ratio"] = lk
        c["kernel_ok"] = lk <= sch.M + math.log1p(cfg.tol_certificate)
        c["ok"] = c["ok"] and c["kernel_ok"]
        c["label"] = ts.label()
        c["schedule"] = {k: v for k, v in sch.to_dict().items() if k != "samples"}
        certs.append(c)
        ok &= c["ok"]
    rep["T"] = state.T
    rep["certificates"] = certs
    rep["applicable"] = True
    rep["ok"] = bool(ok)
    if not ok:
        state.fail("iu", "IU certificate failed for at least one t")
    return ok


def run_certify(cfg: RunConfig) -> RunState:
    """Run every stage that its inputs allow; failures are recorded, not raised."""
    state = RunState(cfg)
    state.report["config"] = cfg.to_dict()
    if not stage_potential(state):
        return _finish(state)
    if not stage_discretize(state):
        return _finish(state)
    stage_rosen(state)
    if state.sandwich is None and not state.harmonic:
        return _finish(state)
    stage_semigroup(state)
    stage_iu(state)
    return _finish(state)


def _finish(state: RunState) -> RunState:
    state.report["failures"] = state.failures
    state.report["exit_code"] = state.exit_code
    state.report["ok"] = state.exit_code == EXIT_OK
    return state


def run_check_potential(cfg: RunConfig) -> RunState:
    state = RunState(cfg)
    state.report["config"] = cfg.to_dict()
    stage_potential(state)
    return _finish(state)
