import warnings

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet_markov_warning():
    # large g*tau is used on purpose in several tests
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="g\\*tau")
        yield
