import math

import pytest

from gwldp.model import BUNDLED, bundled_model, bundled_model_path


def catalan(m: int) -> int:
    return math.comb(2 * m, m) // (m + 1)


@pytest.fixture(scope="session")
def binary():
    return bundled_model("binary")


@pytest.fixture(scope="session")
def two_type():
    return bundled_model("two_type")


@pytest.fixture(scope="session")
def mixed():
    return bundled_model("mixed")


@pytest.fixture(scope="session", params=BUNDLED)
def critical_model(request):
    return bundled_model(request.param)


@pytest.fixture
def model_path():
    return lambda name: str(bundled_model_path(name))


# one line per acceptance criterion, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
