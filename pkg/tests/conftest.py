import numpy as np
import pytest

from rwre.environment import EnvironmentSpec, TwoPoint, make_environment

HB_STEPS = [-1, -1, +1, +1, +1, +1, -1, -1, -1, -1, -1, +1, +1, +1, +1]
HB_V = [0, -1, -2, -1, 0, 1, 2, 1, 0, -1, -2, -3, -2, -1, 0, 1]


def hb_env(seed: int = 0):
    """TwoPoint(1) environment whose first 15 increments are forced."""
    return make_environment(EnvironmentSpec(TwoPoint(1.0), seed), prefix=HB_STEPS)


def fair_env(n: int = 4096, seed: int = 0):
    """omega = 1/2 on sites 1..n."""
    return make_environment(EnvironmentSpec(TwoPoint(1.0), seed), prefix=np.zeros(n))


def forced_env(steps, seed: int = 0):
    return make_environment(EnvironmentSpec(TwoPoint(1.0), seed), prefix=steps)


@pytest.fixture
def hb():
    return hb_env()


@pytest.fixture
def fair():
    return fair_env()
