import os

import pytest

from src.dataset import synthetic_blobs
from src.engine import init_network, mlp


def pytest_collection_modifyitems(config, items):
    if os.environ.get("MNIST_DATA_DIR"):
        return
    skip = pytest.mark.skip(reason="MNIST_DATA_DIR is not set")
    for item in items:
        if "mnist" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def small_net():
    """Seeded 4-5-3 ReLU network at T=1."""
    return init_network(mlp(4, 5, 3), temperature=1.0, seed=11)


@pytest.fixture
def blobs():
    return synthetic_blobs(seed=3, n_per_class=100, classes=2, d=2, separation=10.0)

