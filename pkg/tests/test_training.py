import numpy as np
import pytest

from src.engine import LabeledDataset, TrainConfig, accuracy, init_network, mean_loss, mlp
from src.errors import InvalidArgumentError
from src.training import train_sgd
from tests.helpers import same_weights


def test_zero_learning_rate_leaves_weights_unchanged(blobs):
    net = init_network(mlp(2, 8, 2), temperature=1.0, seed=1)
    trained = train_sgd(net, blobs, TrainConfig(epochs=3, learning_rate=0.0, seed=1))
    assert same_weights(net, trained)


def test_does_not_mutate_input_network(blobs):
    net = init_network(mlp(2, 8, 2), temperature=1.0, seed=1)
    snapshot = net.copy()
    train_sgd(net, blobs, TrainConfig(epochs=2, seed=1))
    assert same_weights(net, snapshot)


def test_is_deterministic(blobs):
    net = init_network(mlp(2, 8, 2), temperature=5.0, seed=2)
    cfg = TrainConfig(epochs=3, batch_size=16, seed=9)
    assert same_weights(train_sgd(net, blobs, cfg), train_sgd(net, blobs, cfg))


def test_shuffle_seed_changes_result(blobs):
    net = init_network(mlp(2, 8, 2), temperature=1.0, seed=2)
    first = train_sgd(net, blobs, TrainConfig(epochs=2, batch_size=16, seed=1))
    second = train_sgd(net, blobs, TrainConfig(epochs=2, batch_size=16, seed=2))
    assert not same_weights(first, second)


def test_separable_blobs_are_learned(blobs):
    net = init_network(mlp(2, 16, 2), temperature=1.0, seed=0)
    before = mean_loss(net, blobs.inputs, blobs.labels)

    trained = train_sgd(net, blobs, TrainConfig(epochs=50, batch_size=32, seed=0))

    assert accuracy(trained, blobs) >= 0.99
    assert mean_loss(trained, blobs.inputs, blobs.labels) < before
    assert trained.temperature == 1.0


def test_trains_at_network_temperature(blobs):
    net = init_network(mlp(2, 16, 2), temperature=20.0, seed=0)
    trained = train_sgd(net, blobs, TrainConfig(epochs=5, seed=0))
    assert trained.temperature == 20.0


def test_empty_dataset():
    empty = LabeledDataset(np.zeros((0, 2)), np.zeros((0, 2)), "hard")
    net = init_network(mlp(2, 2), temperature=1.0, seed=0)
    with pytest.raises(InvalidArgumentError):
        train_sgd(net, empty, TrainConfig(epochs=1))


def test_dimension_mismatch(blobs):
    net = init_network(mlp(3, 2), temperature=1.0, seed=0)
    with pytest.raises(InvalidArgumentError):
        train_sgd(net, blobs, TrainConfig(epochs=1))


def test_class_count_mismatch(blobs):
    net = init_network(mlp(2, 3), temperature=1.0, seed=0)
    with pytest.raises(InvalidArgumentError):
        train_sgd(net, blobs, TrainConfig(epochs=1))


def test_config_rejects_negative_learning_rate():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-0.1)
