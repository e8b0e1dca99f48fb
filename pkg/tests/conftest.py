import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cbext.kernel import build_kernel
from cbext.mechanism import MechanismSpec, make_mechanism

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def stable():
    return make_mechanism(MechanismSpec.stable(1.0, 1.5))


@pytest.fixture(scope="session")
def quadratic():
    return make_mechanism(MechanismSpec.quadratic(1.0))


@pytest.fixture(scope="session")
def lin_quad():
    return make_mechanism(MechanismSpec.linear_quadratic(1.0, 1.0))


@pytest.fixture(scope="session")
def stable_kernel(stable):
    return build_kernel(stable)


@pytest.fixture(scope="session")
def quadratic_kernel(quadratic):
    return build_kernel(quadratic)


ALL_SPECS = [
    MechanismSpec.stable(1.0, 1.5),
    MechanismSpec.stable(2.0, 1.2),
    MechanismSpec.quadratic(1.0),
    MechanismSpec.linear_quadratic(1.0, 1.0),
    MechanismSpec.stable_gaussian(1.0, 1.5, 1.0),
    MechanismSpec.stable_drift(0.5, 1.0, 1.7),
]


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if test_acceptance.VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.VERDICTS:
            terminalreporter.write_line(line)
