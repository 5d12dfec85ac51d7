import math
import warnings

import numpy as np
import pytest

from iucert import iu, rosen
from iucert import potentials as pt
from iucert.discretize import RadialGrid, assemble_operator, eigenpairs, ground_state


class Setup:
    """Everything downstream of a certified potential on a fixed grid."""

    def __init__(self, spec, k, m, N=600, r_max=1e12, log_r_max=None):
        self.spec = spec
        self.report = pt.check_theorem_conditions(spec, 1.0, k, m, r_max=r_max, log_r_max=log_r_max)
        self.R_max = pt.decay_radius(spec)
        self.grid = RadialGrid(3, self.R_max, N)
        self.q = pt.Q_array(spec, self.grid.nodes)
        self.op = assemble_operator(self.grid, self.q)
        self.gs = ground_state(self.op)
        self.spectrum = eigenpairs(self.op)
        d = rosen.auto_d(spec, k, m, self.report.log_R_m, self.report.r0, self.grid.nodes, self.q)
        self.sandwich = self.report.sandwich(d)
        lrm = log_r_max if log_r_max is not None else math.log(r_max)
        self.cert = rosen.rosen_certificate(self.gs, None, spec, self.sandwich, log_r_max=lrm)
        self.T = iu.horizon_T(self.sandwich)


@pytest.fixture(scope="session")
def q1():
    """Q(r) = r^4 with k = 2, m = 1."""
    return Setup(pt.PotentialSpec.power(4), 2.0, 1)


@pytest.fixture(scope="session")
def q2():
    """Q(r) = r^2 (ln r)^3 with k = 1.1, m = 1 (k in (1, alpha/2))."""
    return Setup(pt.PotentialSpec.log_power(3), 1.1, 1)


@pytest.fixture(scope="session")
def ho():
    """Harmonic oscillator q = r^2, n = 3, R_max = 12, N = 2400."""
    grid = RadialGrid(3, 12.0, 2400)
    op = assemble_operator(grid, grid.nodes**2)
    return grid, op, ground_state(op)


@pytest.fixture(scope="session")
def small():
    """A small grid for fast semigroup tests: Q = r^4, N = 200."""
    spec = pt.PotentialSpec.power(4)
    grid = RadialGrid(3, pt.decay_radius(spec), 200)
    op = assemble_operator(grid, pt.Q_array(spec, grid.nodes))
    return grid, op, ground_state(op), eigenpairs(op)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line per acceptance criterion; returns the condition."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(n, ok, detail=""):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
