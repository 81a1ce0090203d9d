import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sepalpha.model import ModelParams

settings.register_profile(
    "default",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("thorough", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_params(N=4, alpha=2, theta=0.0, lambda_l=1.0, lambda_r=1.0, rho_l=None, rho_r=None):
    rho_l = 0.25 * alpha if rho_l is None else rho_l
    rho_r = 0.75 * alpha if rho_r is None else rho_r
    return ModelParams(alpha, lambda_l, lambda_r, rho_l, rho_r, theta, N)
