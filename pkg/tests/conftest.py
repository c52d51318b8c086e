"""Shared fixtures for the crosspose test suite.

Cameras and scenes here are deliberately small (96x96 or less) so the
whole suite stays fast; geometry is tuned so synthetic objects project
to a few hundred pixels, enough to exercise every code path.
"""

import numpy as np
import pytest

from crosspose import CameraIntrinsics, Pose


@pytest.fixture(scope="session")
def cam96():
    """Narrow-FOV camera used by most synthetic-scene tests."""
    return CameraIntrinsics(fx=500.0, fy=500.0, cx=47.5, cy=47.5, width=96, height=96)


@pytest.fixture(scope="session")
def cam64():
    """Small camera for brute-force per-pixel oracles."""
    return CameraIntrinsics(fx=80.0, fy=80.0, cx=31.5, cy=31.5, width=64, height=64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_rotation_matrix(rng):
    """Uniform-ish random rotation via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 2] = -q[:, 2]
    return q


def random_se3(rng, translation_scale=1.0):
    return Pose(random_rotation_matrix(rng), rng.normal(size=3) * translation_scale)
