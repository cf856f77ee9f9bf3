import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rspose.geom import CameraIntrinsics, StereoRigConfig
from rspose.simgen import random_motion

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def K():
    """900x900 camera with focal 810, principal point at the centre."""
    return CameraIntrinsics(810.0, 810.0, 450.0, 450.0, 900, 900)


@pytest.fixture
def rig():
    return StereoRigConfig(half_baseline=0.5, readout_ratio=0.8, n_rows=900)


@pytest.fixture
def motion():
    return random_motion(np.random.default_rng(11), 0.3, 0.4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
