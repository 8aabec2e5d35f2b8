"""
Shared fixtures for the test suite.
"""

import numpy as np
import pytest

from services.datagen import SyntheticSpec, generate
from services.estimators import Dataset, homography_estimator, line_estimator


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale benchmarks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))


@pytest.fixture
def line_spec():
    return line_estimator(1.0)


@pytest.fixture
def homography_spec():
    return homography_estimator(1.0)


@pytest.fixture
def collinear_points():
    """50 points exactly on y = 2x + 1."""
    t = np.arange(50, dtype=float)
    return Dataset(np.column_stack([t, 2 * t + 1]))


@pytest.fixture
def small_line_dataset():
    """Noiseless line, 12 observations, 6 inliers."""
    return generate(SyntheticSpec(task="line", n=12, inlier_ratio=0.5, noise_sigma=0.0, seed=7))


def random_homography(rng, box=100.0):
    a, b, c, d = rng.uniform(-0.2, 0.2, size=4)
    tx, ty = rng.uniform(-0.1, 0.1, size=2) * box
    e, f = rng.uniform(-0.2, 0.2, size=2) / box
    return np.array([[1 + a, b, tx], [c, 1 + d, ty], [e, f, 1.0]])


def apply_homography(H, points):
    homog = np.hstack([points, np.ones((points.shape[0], 1))]) @ H.T
    return homog[:, :2] / homog[:, 2:]
