import numpy as np
import pytest

from revosc.actionangle import AAConstants
from revosc.coefficients import CoefficientSpec, PeriodicFunction, demo_spec
from revosc.dynamics import IntegratorConfig, SystemConfig
from revosc.special import get_trig


@pytest.fixture(scope="session")
def trig2():
    return get_trig(2)


@pytest.fixture(scope="session")
def const2(trig2):
    return AAConstants.from_trig(trig2)


@pytest.fixture(scope="session")
def demo():
    return demo_spec()


@pytest.fixture(scope="session")
def zero_spec2():
    return CoefficientSpec(n=2, a=(PeriodicFunction.zero(), PeriodicFunction.zero()))


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running scenario tests")
