import pytest

from dynwatermark.scenarios import DOUBLE_INTEGRATOR_DESIGN, VEHICLE_DESIGN, build_double_integrator, build_vehicle


@pytest.fixture(scope="session")
def vehicle():
    return VEHICLE_DESIGN.design(build_vehicle())


@pytest.fixture(scope="session")
def vehicle_wind():
    return VEHICLE_DESIGN.design(build_vehicle(include_wind=True))


@pytest.fixture(scope="session")
def double_integrator():
    return DOUBLE_INTEGRATOR_DESIGN.design(build_double_integrator())


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
