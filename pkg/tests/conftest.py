import math

import pytest

from sivsim.experiments import Calibration, SweepSpec, calibrate
from sivsim.model import MagneticField, SivParameters

FIELD = MagneticField.from_degrees(0.3, 109.0)
AXIAL = MagneticField.from_degrees(0.3, 0.0)
SHARED = Calibration(line_separation=54e6, orbital_two_t1=133e-9, t2star=115e-9)
T1_TARGET = Calibration(spin_t1=350e-9, orbital_two_t1=133e-9, t2star=115e-9)

# acceptance verdict lines, repeated in the terminal summary
VERDICTS = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def field():
    return FIELD


@pytest.fixture(scope="session")
def params():
    """Parameters calibrated to the 54 MHz line separation at 3.6 K."""
    return calibrate(SivParameters(a_perp=0.0), FIELD, SHARED)


@pytest.fixture(scope="session")
def t1_params():
    """Parameters calibrated to a 350 ns spin T1 at 3.5 K."""
    return calibrate(SivParameters(a_perp=0.0), FIELD, T1_TARGET)


@pytest.fixture(scope="session")
def coherent_params(params):
    return params.replace(gamma0_orbital=0.0, gamma_phi_extra=0.0)


@pytest.fixture
def spec_for(field):
    def make(params, variable="x", start=0.0, stop=1.0, count=2, **kw):
        return SweepSpec(variable, start, stop, count, params=params, field=field, **kw)

    return make


def close(a, b, rel):
    return math.isclose(a, b, rel_tol=rel)
