import pytest

from l0lab.noise import gaussian, new_exp_poly, quartic

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def gauss():
    return gaussian()


@pytest.fixture(scope="session")
def gauss2():
    return gaussian(2.0)


@pytest.fixture(scope="session")
def quart():
    return quartic()


@pytest.fixture(scope="session")
def skewed():
    # asymmetric, with a bump: psi = -z^4/2 + 0.3 z^3 - z^2 + 0.5 z
    return new_exp_poly([0.0, 0.5, -1.0, 0.3, -0.5])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
