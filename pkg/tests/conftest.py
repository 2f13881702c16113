import numpy as np
import pytest

from fwdmort.levy import jump_diffusion_driver
from fwdmort.surface import GompertzParams, SurfaceGrid


@pytest.fixture
def jd():
    """Jump diffusion W + N with cumulant z^2/2 + e^z - 1."""
    return jump_diffusion_driver()


@pytest.fixture
def gompertz():
    return GompertzParams(2.0, 0.1, 1e-4, 0.1, 1e-3)


@pytest.fixture
def small_grid():
    return SurfaceGrid.from_extent(0.1, 2.0, 4.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
