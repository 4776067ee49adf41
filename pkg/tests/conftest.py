import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from linadjust import Dataset, ExactMoments, PopulationSpec

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def hand_data():
    """Six rows, one covariate, balanced arms; exact fits are easy by hand."""
    return Dataset(
        a=[1, 1, 1, 0, 0, 0],
        x=[-1.0, 0.0, 1.0, -1.0, 0.0, 1.0],
        y=[1.0, 2.0, 4.0, 0.0, 1.0, 1.0],
    )


@pytest.fixture
def s1_moments():
    """Moment record of the first simulation scenario's population."""
    return ExactMoments(
        sigma=np.array([[1.0]]),
        omega1=np.array([2.5]),
        omega0=np.array([1.0]),
        mu1=5.0,
        mu0=3.0,
        q1=32.25,
        q0=11.0,
    )


@pytest.fixture
def s1_population(s1_moments):
    return PopulationSpec(pi=0.3, moments=s1_moments)
