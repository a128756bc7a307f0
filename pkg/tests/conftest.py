import pytest

from ivrepr import CallSpec, CevVol, ConstantVol, SpaceTimeGrid, TimeDependentVol
from ivrepr import solve_forward_density, verify_representation

S0 = 100.0


def default_grid(surface, maturity=1.0, factor=1):
    g = SpaceTimeGrid.for_surface(surface, S0, maturity)
    return g.refined(factor) if factor > 1 else g


@pytest.fixture(scope="session")
def constant():
    return ConstantVol(0.2)


@pytest.fixture(scope="session")
def piecewise():
    return TimeDependentVol((0.0, 0.5), (0.1, 0.3))


@pytest.fixture(scope="session")
def cev():
    return CevVol(2.0, 0.5)


@pytest.fixture(scope="session")
def constant_density(constant):
    return solve_forward_density(constant, S0, default_grid(constant))


@pytest.fixture(scope="session")
def piecewise_density(piecewise):
    return solve_forward_density(piecewise, S0, default_grid(piecewise))


@pytest.fixture(scope="session")
def cev_density(cev):
    return solve_forward_density(cev, S0, default_grid(cev))


@pytest.fixture(scope="session")
def cev_density_fine(cev):
    return solve_forward_density(cev, S0, default_grid(cev, factor=2))


@pytest.fixture(scope="session")
def constant_report(constant, constant_density):
    return verify_representation(constant, S0, CallSpec(100.0, 1.0), density=constant_density)


@pytest.fixture(scope="session")
def piecewise_report(piecewise, piecewise_density):
    return verify_representation(piecewise, S0, CallSpec(100.0, 1.0), density=piecewise_density)


@pytest.fixture(scope="session")
def cev_reports(cev, cev_density):
    return {k: verify_representation(cev, S0, CallSpec(k, 1.0), density=cev_density)
            for k in (80.0, 100.0, 120.0)}


@pytest.fixture(scope="session")
def cev_reports_fine(cev, cev_density_fine):
    return {k: verify_representation(cev, S0, CallSpec(k, 1.0), density=cev_density_fine)
            for k in (80.0, 100.0, 120.0)}


#: one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = {}


def record_criterion(number, title, passed, detail):
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
