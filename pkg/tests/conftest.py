"""Shared fixtures and hypothesis settings."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pyramid_planner.geometry import CameraIntrinsics, DepthImage

# compiled kernels make the first example of a property slow
settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def intr100():
    return CameraIntrinsics(100.0, 100.0, 50.0, 50.0, 100, 100)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def blob_image(intr, blob_depth=2.0, background=10.0, half=10):
    """Uniform background with a square block of shallow pixels centred on the principal point."""
    d = np.full((intr.height, intr.width), background)
    ci, cj = int(round(intr.cy)), int(round(intr.cx))
    d[ci - half : ci + half, cj - half : cj + half] = blob_depth
    return DepthImage(intr, d, background)
