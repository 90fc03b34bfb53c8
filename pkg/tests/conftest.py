import math

import pytest

from wgtrap.extract import augmented_limit_matrix, limit_scattering_matrix
from wgtrap.geometry import reference_omega_inf, reference_Omega_inf

K0 = 0.8 * math.pi
H_COARSE = 0.05


@pytest.fixture(scope="session")
def k0():
    return K0


@pytest.fixture(scope="session")
def limit_matrix_coarse():
    """3x3 limit matrix of the open-branch guide at k = 0.8 pi, h = 0.05."""
    return limit_scattering_matrix(reference_omega_inf(), K0, H_COARSE)


@pytest.fixture(scope="session")
def augmented_limit_coarse():
    return augmented_limit_matrix(reference_Omega_inf(), K0, H_COARSE)


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one PASS/FAIL line per acceptance criterion."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
