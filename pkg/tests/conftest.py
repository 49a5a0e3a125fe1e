import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from higgslab.lattice import LatticeDomain

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def torus64():
    return LatticeDomain.torus(1, 64, 1.0)


@pytest.fixture(scope="session")
def torus32():
    return LatticeDomain.torus(1, 32, 1.0)


@pytest.fixture(scope="session")
def patch32():
    return LatticeDomain.patch(1, 32, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
