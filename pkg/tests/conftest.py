import numpy as np
import pytest

from rootembed import (DiffusionSpec, ProbabilityMeasure, SimConfig, build_grid, extract_barrier,
                       simulate_hitting, solve_vi)

SIGMA1 = DiffusionSpec.constant(1.0)
D0 = ProbabilityMeasure.dirac(0.0)
D1 = ProbabilityMeasure.dirac(1.0)
PM1 = ProbabilityMeasure.atoms([-1.0, 1.0])
NON_UI_MU = ProbabilityMeasure.atoms([-1.0, 3.0])


class Case:
    def __init__(self, nu, mu, C, dx=0.02, t_max=2.0, sigma=SIGMA1):
        self.nu, self.mu, self.C, self.sigma = nu, mu, C, sigma
        self.grid = build_grid(nu, mu, sigma, t_max, dx=dx)
        self.surface = solve_vi(nu, mu, C, sigma, self.grid)
        self.barrier = extract_barrier(self.surface, warn=False)

    def simulate(self, n_paths, dt_sim, t_cap, seed=0, checkpoints=(), **kw):
        cfg = SimConfig(n_paths, dt_sim, t_cap, seed, tuple(checkpoints), **kw)
        return simulate_hitting(self.nu, self.sigma, self.barrier, cfg)


@pytest.fixture(scope="session")
def example1():
    return Case(D0, D1, 1.0)


@pytest.fixture(scope="session")
def example2():
    return Case(PM1, D0, 1.0)


@pytest.fixture(scope="session")
def ui_case():
    return Case(D0, PM1, 0.0)


@pytest.fixture(scope="session")
def example1_ensemble(example1):
    return example1.simulate(20000, 1e-3, 4.0, seed=11, checkpoints=(0.25, 0.5, 1.0, 2.0, 4.0),
                             occupation=True)


@pytest.fixture(scope="session")
def ui_ensemble(ui_case):
    return ui_case.simulate(20000, 1e-3, 6.0, seed=12, checkpoints=(0.25, 0.5, 1.0, 2.0, 6.0),
                            record_unstopped=True)


def max_second_difference(v):
    v = np.asarray(v)
    return float(np.max(v[2:] - 2 * v[1:-1] + v[:-2]))


ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record the outcome of one acceptance criterion for the end-of-run table."""
    def record(number, ok, detail):
        ACCEPTANCE[number] = (bool(ok), detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
