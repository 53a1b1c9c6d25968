import numpy as np
import pytest

from octacross.mesh import make_canonical_mesh


@pytest.fixture(scope="session")
def cube():
    return make_canonical_mesh("cube")


@pytest.fixture(scope="session")
def wedge():
    return make_canonical_mesh("wedge")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
