import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from alpha_dynamo import alpha_zero as az
from alpha_dynamo import fourier_field as ff

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def abc111():
    return ff.abc_flow(1, 1, 1, 2)


@pytest.fixture(scope="session")
def abc_selection(abc111):
    return az.select_xi(az.alpha(abc111), denominator_bound=100)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
