import numpy as np
import pytest

from voidplace.fields import SeparableKernel, SquashParams, sample_lgcp_intensity
from voidplace.grid import ScalarField, make_grid
from voidplace.scenario import Scenario
from voidplace.sensing import AvailabilityParams, DetectionMatrix

DEFAULT_ENV = SeparableKernel(0.8, 0.5, 1.0)
DEFAULT_SQUASH = SquashParams(1.5)
DEFAULT_AVAIL = AvailabilityParams(5.0, 0.2)


@pytest.fixture
def full_grid():
    return make_grid(0, 10, 0, 24, 200, 48)


@pytest.fixture
def small_grid():
    return make_grid(0, 4, 0, 2, 20, 4)


def random_instance(rng, n_s=30, n_t=6, m=12):
    """Random intensity and detection matrix on a desk-scale grid."""
    grid = make_grid(0, 1, 0, 1, n_s, n_t)
    lam = ScalarField(grid, rng.gamma(2.0, 1.0, grid.n_cells))
    centers = rng.uniform(0, 1, m)
    widths = rng.uniform(0.05, 0.3, m)
    s = grid.cell_s()
    pt = rng.uniform(0.3, 1.0, (m, 1)) * np.exp(-((s[None, :] - centers[:, None]) ** 2) / widths[:, None] ** 2)
    return lam, DetectionMatrix.from_effective(grid, pt)


def small_scenario(seed=0, n_s=40, n_t=8, log_mean=-1.5, **kw):
    grid = make_grid(0, 10, 0, 24, n_s, n_t)
    tk = SeparableKernel(0.5, 1.0, 3.0)
    lam = sample_lgcp_intensity(grid, tk, log_mean, seed=1000 + seed)
    return Scenario(lam, DEFAULT_ENV, DEFAULT_SQUASH, DEFAULT_AVAIL, 1.2, target_kernel=tk, seed=seed, **kw)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import N_CRITERIA, RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        if n in RESULTS:
            ok, detail = RESULTS[n]
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d}: NOT RUN")
