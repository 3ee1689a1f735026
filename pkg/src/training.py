from __future__ import annotations

import numpy as np
import numpy.typing as npt

from src.engine import (
    LOG_FLOOR,
    SHUFFLE_STREAM,
    DenseSpec,
    LabeledDataset,
    Network,
    Tensor,
    TrainConfig,
    backward,
)
from src.errors import InvalidArgumentError
from utility.logging_config import get_logger
from utility.runtime import derive_rng

logger = get_logger("training")

# below this magnitude of the analytic gradient the absolute error is reported
RELATIVE_ERROR_FLOOR = 1e-8


def train_sgd(
    net: Network, data: LabeledDataset, cfg: TrainConfig, log=None
) -> Network:
    """Minibatch SGD with momentum at the network's temperature.

    Returns a trained copy; ``net`` is left untouched. The result depends only on
    ``(net, data, cfg)``: minibatch order comes from the ``cfg.seed`` shuffle stream.
    """
    log = log or logger

    if len(data) == 0:
        raise InvalidArgumentError("cannot train on an empty dataset")
    if data.inputs.shape[1] != net.input_width:
        raise InvalidArgumentError(
            f"dataset has {data.inputs.shape[1]} features, network expects "
            f"{net.input_width}"
        )
    if data.num_classes != net.num_classes:
        raise InvalidArgumentError(
            f"dataset has {data.num_classes} classes, network has {net.num_classes}"
        )

    trained = net.copy()
    rng = derive_rng(cfg.seed, SHUFFLE_STREAM)
    velocity = [(np.zeros_like(weight), np.zeros_like(bias)) for weight, bias in trained.weights]
    sample_count = len(data)

    for epoch in range(cfg.epochs):
        order = rng.permutation(sample_count)
        epoch_loss = 0.0

        for start in range(0, sample_count, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            gradients = backward(trained, data.inputs[batch], data.labels[batch])
            epoch_loss += gradients.mean_loss * len(batch)

            for (weight, bias), (weight_velocity, bias_velocity), (
                weight_grad,
                bias_grad,
            ) in zip(trained.weights, velocity, gradients.weight_grads):
                weight_velocity *= cfg.momentum
                weight_velocity -= cfg.learning_rate * weight_grad
                bias_velocity *= cfg.momentum
                bias_velocity -= cfg.learning_rate * bias_grad
                weight += weight_velocity
                bias += bias_velocity

        log.info(
            f"epoch {epoch + 1}/{cfg.epochs} T={trained.temperature:g} "
            f"mean loss {epoch_loss / sample_count:.6f}"
        )

    return trained


def _relative_errors(analytic: Tensor, numeric: Tensor) -> Tensor:
    difference = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    small = np.abs(analytic) < RELATIVE_ERROR_FLOOR
    return np.where(small, difference, difference / np.where(small, 1.0, scale))


def _extended_loss(
    net: Network, weights: list[tuple[Tensor, Tensor]], x: Tensor, targets: Tensor
) -> np.longdouble:
    """Batch-mean cross-entropy evaluated in extended precision."""
    activation = x
    dense_index = 0
    for layer in net.layers:
        if isinstance(layer, DenseSpec):
            weight, bias = weights[dense_index]
            activation = activation @ weight + bias
            dense_index += 1
        else:
            activation = np.maximum(activation, 0)

    scaled = activation / np.longdouble(net.temperature)
    scaled = scaled - scaled.max(axis=1, keepdims=True)
    log_probs = scaled - np.log(np.exp(scaled).sum(axis=1, keepdims=True))
    log_probs = np.maximum(log_probs, np.log(np.longdouble(LOG_FLOOR)))
    return -(targets * log_probs).sum(axis=1).mean()


def _central_difference(loss, values: Tensor, h: float) -> Tensor:
    """Central differences of ``loss()`` with respect to every entry of ``values`` (perturbed in place)."""
    numeric = np.empty(values.shape)
    flat = values.reshape(-1)
    numeric_flat = numeric.reshape(-1)
    for index in range(flat.size):
        original = flat[index]
        flat[index] = original + h
        upper = loss()
        flat[index] = original - h
        lower = loss()
        flat[index] = original
        numeric_flat[index] = (upper - lower) / (2 * np.longdouble(h))
    return numeric


def gradient_check(
    net: Network, x: npt.ArrayLike, targets: npt.ArrayLike, h: float = 1e-5
) -> float:
    """Worst relative error between ``backward`` and central differences.

    Covers every weight, bias and input entry. The absolute error is used where
    the analytic gradient is below 1e-8 in magnitude. Differences are taken in
    extended precision so rounding noise stays far below the tolerance.
    """
    if not h > 0:
        raise InvalidArgumentError(f"step h must be positive, got {h}")

    gradients = backward(net, x, targets)

    extended_x = np.array(x, dtype=np.longdouble)
    extended_targets = np.array(targets, dtype=np.longdouble)
    extended_weights = [
        (weight.astype(np.longdouble), bias.astype(np.longdouble))
        for weight, bias in net.weights
    ]

    def loss():
        return _extended_loss(net, extended_weights, extended_x, extended_targets)

    worst = 0.0
    for (weight, bias), (weight_grad, bias_grad) in zip(
        extended_weights, gradients.weight_grads
    ):
        for values, analytic in ((weight, weight_grad), (bias, bias_grad)):
            numeric = _central_difference(loss, values, h)
            worst = max(worst, float(np.max(_relative_errors(analytic, numeric))))

    numeric = _central_difference(loss, extended_x, h)
    worst = max(worst, float(np.max(_relative_errors(gradients.input_grad, numeric))))

    return worst
