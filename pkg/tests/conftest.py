import numpy as np
import pytest

from hydrounit.equilibria import operating_equilibrium
from hydrounit.params import UnitParams


@pytest.fixture(scope="session")
def params():
    return UnitParams()


@pytest.fixture(scope="session")
def rated_eq(params):
    return operating_equilibrium(1.0, params)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Append one summary line per acceptance criterion."""

    def add(criterion: str, passed: bool, detail: str) -> None:
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)

    return add


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
