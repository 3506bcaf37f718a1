import numpy as np
import pytest

from c1flow.c1space import C1Space
from c1flow.mesh import build_interval_mesh, build_structured_triangulation


ACCEPTANCE_LINES: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: runs for more than a few seconds")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


@pytest.fixture(scope="session")
def space1d():
    return C1Space(build_interval_mesh(0.0, 1.0, 4))


@pytest.fixture(scope="session")
def space2d():
    # 8 triangles on the unit square
    return C1Space(build_structured_triangulation(1.0, 1.0, 2, 2))
