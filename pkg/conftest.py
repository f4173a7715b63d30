"""
Shared fixtures: the benchmark systems and a factory of random PD systems.
"""

import numpy as np
import pytest

from benchmarks import five_source_benchmark, two_source_configuration
from empirical_data import make_rng
from oracle_validation import random_system


@pytest.fixture(scope="session")
def five_source():
    return five_source_benchmark()


@pytest.fixture(scope="session")
def pure_redundancy():
    return two_source_configuration("pure-redundancy")


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture
def make_system(rng):
    """make_system(target_dim, source_dims) -> random PD JointCovariance."""
    def factory(target_dim=1, source_dims=(1, 1, 1)):
        return random_system(rng, target_dim, source_dims)
    return factory


def random_systems(seed: int, count: int, max_sources: int = 5, max_dim: int = 2):
    """Deterministic list of random PD systems with mixed block sizes."""
    rng = make_rng(seed)
    systems = []
    for _ in range(count):
        n = int(rng.integers(2, max_sources + 1))
        target_dim = int(rng.integers(1, max_dim + 1))
        dims = [int(d) for d in rng.integers(1, max_dim + 1, size=n)]
        systems.append(random_system(rng, target_dim, dims))
    return systems


def assert_close(actual, expected, atol):
    assert np.allclose(actual, expected, rtol=0.0, atol=atol), f"{actual} != {expected} (atol {atol})"
