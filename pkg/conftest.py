"""
Shared pytest fixtures for oodkit
"""

import os
import sys

import numpy as np
import pytest

# Add current directory to Python path (same as in app.py)
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running end-to-end checks")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_square():
    """Four corners of a 2x2 square: mean (1,1), population covariance I"""
    return np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]])


@pytest.fixture
def clusters(rng):
    """Three tight 16-D clusters inside [0.25, 0.75] plus uniform noise"""
    means = rng.uniform(0.25, 0.75, size=(3, 16))
    train = np.vstack([m + 0.05 * rng.standard_normal((200, 16)) for m in means])
    test_in = np.vstack([m + 0.05 * rng.standard_normal((50, 16)) for m in means])
    noise = rng.uniform(0.0, 1.0, size=(150, 16))
    return train, test_in, noise
