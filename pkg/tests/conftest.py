import numpy as np
import pytest

from magnonrc.magnetics import MaterialParams, SimGrid


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_grid():
    return SimGrid(12, 6, 1, 2.5e-9, MaterialParams())


def random_state(grid, rng, tilt=0.3, axis=2):
    m = np.zeros((grid.nx, grid.ny, 3))
    m[..., axis] = 1.0
    m += tilt * rng.standard_normal(m.shape)
    m /= np.linalg.norm(m, axis=-1, keepdims=True)
    m[~grid.material.active] = 0.0
    return m


_CRITERIA = []


def pytest_runtest_logreport(report):
    if report.when == "call":
        _CRITERIA.extend(ln for ln in report.capstdout.splitlines() if ln.startswith("criterion "))


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for ln in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(ln)
