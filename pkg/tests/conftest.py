import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from parisi import MixtureSpec, OptimizerOptions, make_spec, minimize_ladder

settings.register_profile(
    "suite",
    max_examples=40,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


# the three models the acceptance gates run on
SPEC_RS = make_spec({2: 0.4}, h=0.0)
SPEC_RSB = make_spec({2: 1.2}, h=0.0)
SPEC_MIX = make_spec({2: 1.0, 4: 0.8}, h=0.4)

ACCEPTANCE_OPTS = OptimizerOptions(seed=2024)


@pytest.fixture(scope="session")
def ladder_rs():
    return minimize_ladder(SPEC_RS, 4, ACCEPTANCE_OPTS)


@pytest.fixture(scope="session")
def ladder_rsb():
    return minimize_ladder(SPEC_RSB, 4, ACCEPTANCE_OPTS)


@pytest.fixture(scope="session")
def ladder_mix():
    return minimize_ladder(SPEC_MIX, 4, ACCEPTANCE_OPTS)
