import numpy as np
import pytest

from oscistrip.discretization.fem import FemBase, FemSystem
from oscistrip.discretization.mesh import generate_disk_mesh
from oscistrip.discretization.nonlinearity import bistable
from oscistrip.geometry import Circle, cosine_profile, two_plus_cos

# filled by test_acceptance; printed once at the end of the session
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def coarse_base():
    return FemBase(generate_disk_mesh(1.0, 0.15, 0.025), Circle())


@pytest.fixture(scope="session")
def coarse_mesh(coarse_base):
    return coarse_base.mesh


@pytest.fixture(scope="session")
def default_pair(coarse_base):
    """Two-plus-cos strip system at eps=0.1 and its limit, V=0, f=0."""
    prof = two_plus_cos()
    return FemSystem(coarse_base, 0.1, prof), FemSystem(coarse_base, 0.0, prof)


@pytest.fixture(scope="session")
def bistable_pair(coarse_base):
    """Calibrated-style bistable scenario at eps=0.1 and eps=0."""
    prof = cosine_profile(1.0, 0.5)
    f = bistable()
    return (FemSystem(coarse_base, 0.1, prof, 1.0168, None, f),
            FemSystem(coarse_base, 0.0, prof, 1.0168, None, f))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
