import pytest

from cell2macro.cell import solve_cell_problems
from cell2macro.fem import MaterialParams
from cell2macro.geometry import DomainShape, InclusionShape, build_unit_cell_mesh

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def disk():
    return InclusionShape("disk", (0.0, 0.0), 0.25)


@pytest.fixture(scope="session")
def omega():
    return DomainShape("disk", 0.5)


@pytest.fixture(scope="session")
def unit_params():
    return MaterialParams(1.0, 1.0, 1.0)


@pytest.fixture(scope="session")
def coarse_cell(disk):
    return build_unit_cell_mesh(disk, 1 / 16)


@pytest.fixture(scope="session")
def coarse_correctors(coarse_cell):
    # mu_tilde != mu so that every corrector is nontrivial
    return solve_cell_problems(coarse_cell, MaterialParams(1.0, 0.5, 2.0))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
