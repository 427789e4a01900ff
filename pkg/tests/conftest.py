import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import postselect as ps

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


# The classic two-regressor illustration: one protected regressor, one tested
# at threshold 2.015 (the one-sided 5% t quantile at 5 residual df), unit
# scales, estimator correlation 0.75, n = 7.
CLASSIC = dict(rho=0.75, sigma1=1.0, sigma2=1.0, n=7, c2=2.015)
PANEL_THETA2 = (0.0, 0.1, 0.75, 1.2)


def classic_setting(theta2: float) -> ps.TwoRegressorSetting:
    return ps.TwoRegressorSetting(theta2=theta2, **CLASSIC)


@pytest.fixture(scope="session")
def classic_components():
    """(design, family, target, params) for the theta2 = 0.75 classic setting."""
    return classic_setting(0.75).components()


@pytest.fixture(scope="session")
def classic_gram():
    return np.linalg.inv(np.array([[1.0, 0.75], [0.75, 1.0]]))
