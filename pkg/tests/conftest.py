import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "defectkit",
    deadline=None,
    max_examples=40,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("defectkit")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def cgauss(rng, r, c):
    return (rng.standard_normal((r, c)) + 1j * rng.standard_normal((r, c))) / np.sqrt(2)
