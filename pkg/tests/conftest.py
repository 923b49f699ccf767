import math

import pytest

from noise_witness.params import DEFAULT_COUPLING, NoiseParams

COUPLING = DEFAULT_COUPLING


@pytest.fixture
def markovian_lab():
    """Markovian noise of 0.1 V standard deviation, t_c = 2.5 us."""
    return NoiseParams.markovian(2.5, delta=0.1 * COUPLING)


@pytest.fixture
def underdamped_lab():
    """Second-order noise with omega0 = 6 rad/us, damping 2/t_c = 0.1 /us."""
    return NoiseParams.second_order(20.0, 6.0, drive_norm=0.054 * COUPLING**2)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)




ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion, printed at the end of the run."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
