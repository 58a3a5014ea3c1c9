import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fieldparticle.dynamics import LatticeSystem
from fieldparticle.spectral_core import CouplingSpec, ModeGrid

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

WF = CouplingSpec(g=0.5, sigma=1.0, m=0.0, omega0=1.5)
KGF = CouplingSpec(g=1.0, sigma=0.7, m=1.0, omega0=2.0)

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def wf_small():
    return LatticeSystem(WF, ModeGrid(16.0, 16))


@pytest.fixture(scope="session")
def kgf_small():
    return LatticeSystem(KGF, ModeGrid(16.0, 16))


@pytest.fixture(scope="session")
def wf_box():
    return LatticeSystem(WF, ModeGrid(48.0, 48))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
