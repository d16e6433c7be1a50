"""Shared fixtures for the coalgene test suite."""

import numpy as np
import pytest

from core.montecarlo import configure_workers


@pytest.fixture(autouse=True)
def serial_workers():
    configure_workers(1)
    yield
    configure_workers(1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
