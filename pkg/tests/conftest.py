import pytest

from helpers import VERDICTS, unit_square_mesh
from vemcip.mesh import generate_octag, generate_voronoi


@pytest.fixture(scope="session")
def octag4():
    return generate_octag(4, 0.1, 7)


@pytest.fixture(scope="session")
def voro64():
    return generate_voronoi(64, 5, 3)


@pytest.fixture(scope="session")
def square():
    return unit_square_mesh()



def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
