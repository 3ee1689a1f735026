from __future__ import annotations

from dataclasses import dataclass, field
from typing import Annotated, Literal, Union

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, Field

from src.errors import InvalidArgumentError
from utility.runtime import PRNG_ALGORITHM, derive_rng

Tensor = npt.NDArray[np.float64]

# log(max(p, LOG_FLOOR)) keeps the loss finite on saturated probabilities
LOG_FLOOR = 1e-12
LABEL_SUM_TOLERANCE = 1e-9

# spawn keys of the PRNG streams derived from a TrainConfig seed
INIT_STREAM = 0
SHUFFLE_STREAM = 1


class DenseSpec(BaseModel):
    kind: Literal["dense"] = "dense"
    in_features: int = Field(gt=0)
    out_features: int = Field(gt=0)


class ReluSpec(BaseModel):
    kind: Literal["relu"] = "relu"


LayerSpec = Annotated[Union[DenseSpec, ReluSpec], Field(discriminator="kind")]


class TrainConfig(BaseModel):
    """Minibatch SGD hyperparameters.

    ``seed`` drives both weight initialization and minibatch shuffling.
    """

    epochs: int = Field(default=20, gt=0)
    batch_size: int = Field(default=64, gt=0)
    learning_rate: float = Field(default=0.1, ge=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    init_scale: float = Field(default=1.0, gt=0.0)


def mlp(*widths: int) -> list[LayerSpec]:
    """Dense layers of the given widths with ReLU between them, e.g. ``mlp(784, 200, 10)``."""
    if len(widths) < 2:
        raise InvalidArgumentError("an MLP needs at least an input and an output width")

    layers: list[LayerSpec] = []
    for index, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
        if index > 0:
            layers.append(ReluSpec())
        layers.append(DenseSpec(in_features=fan_in, out_features=fan_out))
    return layers


def validate_architecture(layers: list[LayerSpec]) -> tuple[int, int]:
    """Check layer compatibility and return ``(input_width, num_classes)``."""
    dense = [layer for layer in layers if isinstance(layer, DenseSpec)]
    if not dense:
        raise InvalidArgumentError("architecture has no dense layer")
    if not isinstance(layers[-1], DenseSpec):
        raise InvalidArgumentError("architecture must end with a dense layer")

    for previous, current in zip(dense, dense[1:]):
        if previous.out_features != current.in_features:
            raise InvalidArgumentError(
                f"dense layer widths do not chain: {previous.out_features} -> "
                f"{current.in_features}"
            )

    num_classes = dense[-1].out_features
    if num_classes < 2:
        raise InvalidArgumentError(f"need at least 2 classes, got {num_classes}")

    return dense[0].in_features, num_classes


@dataclass
class Network:
    """A feed-forward classifier whose softmax runs at ``temperature``.

    ``weights`` holds one ``(W, b)`` pair per dense layer with ``W`` of shape
    ``[in, out]``. The softmax is applied after the last layer and is not part of
    ``layers``.
    """

    layers: list[LayerSpec]
    weights: list[tuple[Tensor, Tensor]]
    temperature: float
    seed: int = 0
    prng: str = PRNG_ALGORITHM

    def __post_init__(self):
        self.input_width, self.num_classes = validate_architecture(self.layers)

        if not np.isfinite(self.temperature) or self.temperature <= 0:
            raise InvalidArgumentError(
                f"temperature must be positive, got {self.temperature}"
            )

        dense = [layer for layer in self.layers if isinstance(layer, DenseSpec)]
        if len(dense) != len(self.weights):
            raise InvalidArgumentError(
                f"{len(dense)} dense layers but {len(self.weights)} weight pairs"
            )
        for layer, (weight, bias) in zip(dense, self.weights):
            if weight.shape != (layer.in_features, layer.out_features) or bias.shape != (
                layer.out_features,
            ):
                raise InvalidArgumentError(
                    f"weights {weight.shape}/{bias.shape} do not match "
                    f"Dense({layer.in_features}->{layer.out_features})"
                )

    def copy(self) -> Network:
        return Network(
            layers=[layer.model_copy() for layer in self.layers],
            weights=[(weight.copy(), bias.copy()) for weight, bias in self.weights],
            temperature=self.temperature,
            seed=self.seed,
            prng=self.prng,
        )

    def with_temperature(self, temperature: float) -> Network:
        """Same layers and (shared, read-only) weights at another temperature."""
        return Network(
            layers=self.layers,
            weights=self.weights,
            temperature=float(temperature),
            seed=self.seed,
            prng=self.prng,
        )

    def architecture(self) -> list[dict]:
        return [layer.model_dump() for layer in self.layers]


def init_network(
    layers: list[LayerSpec], temperature: float, seed: int, init_scale: float = 1.0
) -> Network:
    """Uniform ``[-s/sqrt(fan_in), s/sqrt(fan_in)]`` weights, zero biases, seeded."""
    validate_architecture(layers)
    rng = derive_rng(seed, INIT_STREAM)

    weights = []
    for layer in layers:
        if not isinstance(layer, DenseSpec):
            continue
        bound = init_scale / np.sqrt(layer.in_features)
        weight = rng.uniform(-bound, bound, size=(layer.in_features, layer.out_features))
        weights.append((weight, np.zeros(layer.out_features)))

    return Network(
        layers=list(layers), weights=weights, temperature=float(temperature), seed=seed
    )


def zero_network(layers: list[LayerSpec], temperature: float = 1.0) -> Network:
    weights = [
        (np.zeros((layer.in_features, layer.out_features)), np.zeros(layer.out_features))
        for layer in layers
        if isinstance(layer, DenseSpec)
    ]
    return Network(layers=list(layers), weights=weights, temperature=float(temperature))


@dataclass(frozen=True)
class LabeledDataset:
    """Inputs ``[N, d]`` paired with probability-row labels ``[N, n]``."""

    inputs: Tensor
    labels: Tensor
    kind: Literal["hard", "soft"]

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.labels.ndim != 2:
            raise InvalidArgumentError("inputs and labels must be 2-D")
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise InvalidArgumentError(
                f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels"
            )
        if self.kind not in ("hard", "soft"):
            raise InvalidArgumentError(f"unknown label kind {self.kind!r}")
        if not np.all(np.isfinite(self.inputs)):
            raise InvalidArgumentError("inputs contain non-finite values")

        _check_probability_rows(self.labels, "labels")
        if self.kind == "hard" and len(self.labels):
            if not np.all((self.labels == 0.0) | (self.labels == 1.0)):
                raise InvalidArgumentError("hard labels must be indicator vectors")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def num_classes(self) -> int:
        return self.labels.shape[1]

    def classes(self) -> npt.NDArray[np.int64]:
        return np.argmax(self.labels, axis=1)

    def class_counts(self) -> dict[int, int]:
        counts = np.bincount(self.classes(), minlength=self.num_classes)
        return {label: int(count) for label, count in enumerate(counts)}

    def subset(self, indices: npt.ArrayLike) -> LabeledDataset:
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.inputs[indices], self.labels[indices], self.kind)


def one_hot(classes: npt.ArrayLike, num_classes: int) -> Tensor:
    classes = np.asarray(classes, dtype=np.int64)
    labels = np.zeros((classes.shape[0], num_classes))
    labels[np.arange(classes.shape[0]), classes] = 1.0
    return labels


def _check_probability_rows(rows: Tensor, name: str) -> None:
    if not np.all(np.isfinite(rows)):
        raise InvalidArgumentError(f"{name} contain non-finite values")
    if np.any(rows < 0):
        raise InvalidArgumentError(f"{name} contain negative entries")
    sums = rows.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > LABEL_SUM_TOLERANCE):
        raise InvalidArgumentError(f"{name} rows must sum to 1")


def softmax_with_temperature(z: npt.ArrayLike, temperature: float) -> Tensor:
    """Softmax of ``z / temperature`` along the last axis, max-shifted for stability."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 0 or z.shape[-1] < 1:
        raise InvalidArgumentError("softmax needs at least one logit")
    if not np.isfinite(temperature) or temperature <= 0:
        raise InvalidArgumentError(f"temperature must be positive, got {temperature}")
    if not np.all(np.isfinite(z)):
        raise InvalidArgumentError("logits contain non-finite values")

    scaled = z / temperature
    scaled = scaled - scaled.max(axis=-1, keepdims=True)
    exponentials = np.exp(scaled)
    return exponentials / exponentials.sum(axis=-1, keepdims=True)


def cross_entropy(probs: npt.ArrayLike, target: npt.ArrayLike) -> float | Tensor:
    """``-sum(target * log(max(probs, 1e-12)))`` along the last axis."""
    probs = np.asarray(probs, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if probs.shape != target.shape:
        raise InvalidArgumentError(
            f"probability shape {probs.shape} does not match target {target.shape}"
        )

    losses = -np.sum(target * np.log(np.maximum(probs, LOG_FLOOR)), axis=-1)
    # -0.0 for perfect predictions
    losses = np.abs(losses)
    return float(losses) if losses.ndim == 0 else losses


def _as_batch(net: Network, x: npt.ArrayLike) -> Tensor:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_width:
        raise InvalidArgumentError(
            f"expected input of shape [B, {net.input_width}], got {list(x.shape)}"
        )
    return x


def _forward_cached(net: Network, x: Tensor) -> tuple[list[Tensor], Tensor]:
    """Run the layer stack, returning each layer's input and the logits."""
    layer_inputs = []
    activation = x
    dense_index = 0
    for layer in net.layers:
        layer_inputs.append(activation)
        if isinstance(layer, DenseSpec):
            weight, bias = net.weights[dense_index]
            activation = activation @ weight + bias
            dense_index += 1
        else:
            activation = np.maximum(activation, 0.0)
    return layer_inputs, activation


def forward(net: Network, x: npt.ArrayLike) -> tuple[Tensor, Tensor]:
    """Return ``(logits, probs)`` for a batch ``x`` of shape ``[B, d]``."""
    x = _as_batch(net, x)
    _, logits = _forward_cached(net, x)
    return logits, softmax_with_temperature(logits, net.temperature)


def predict(net: Network, x: npt.ArrayLike) -> npt.NDArray[np.int64]:
    """Argmax of the probabilities; ties go to the lowest index."""
    _, probs = forward(net, x)
    return np.argmax(probs, axis=1)


def _backpropagate(
    net: Network,
    layer_inputs: list[Tensor],
    logit_grad: Tensor,
    need_weights: bool = True,
) -> tuple[list[tuple[Tensor, Tensor]], Tensor]:
    weight_grads: list[tuple[Tensor, Tensor]] = []
    grad = logit_grad
    dense_index = len(net.weights) - 1
    for layer, layer_input in zip(reversed(net.layers), reversed(layer_inputs)):
        if isinstance(layer, DenseSpec):
            weight, _ = net.weights[dense_index]
            if need_weights:
                weight_grads.append((layer_input.T @ grad, grad.sum(axis=0)))
            grad = grad @ weight.T
            dense_index -= 1
        else:
            grad = grad * (layer_input > 0.0)
    weight_grads.reverse()
    return weight_grads, grad


def _check_targets(net: Network, x: Tensor, targets: npt.ArrayLike) -> Tensor:
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (x.shape[0], net.num_classes):
        raise InvalidArgumentError(
            f"expected targets of shape [{x.shape[0]}, {net.num_classes}], "
            f"got {list(targets.shape)}"
        )
    _check_probability_rows(targets, "targets")
    return targets


@dataclass
class Gradients:
    weight_grads: list[tuple[Tensor, Tensor]]
    input_grad: Tensor
    mean_loss: float
    logit_grad: Tensor = field(repr=False)


def backward(net: Network, x: npt.ArrayLike, targets: npt.ArrayLike) -> Gradients:
    """Gradients of the batch-mean cross-entropy at the network's temperature.

    The logit gradient is ``(probs - targets) / (B * T)``.
    """
    x = _as_batch(net, x)
    targets = _check_targets(net, x, targets)

    layer_inputs, logits = _forward_cached(net, x)
    probs = softmax_with_temperature(logits, net.temperature)
    batch_size = x.shape[0]

    logit_grad = (probs - targets) / (batch_size * net.temperature)
    weight_grads, input_grad = _backpropagate(net, layer_inputs, logit_grad)

    return Gradients(
        weight_grads=weight_grads,
        input_grad=input_grad,
        mean_loss=float(np.mean(cross_entropy(probs, targets))),
        logit_grad=logit_grad,
    )


def input_gradients(net: Network, x: npt.ArrayLike, targets: npt.ArrayLike) -> Tensor:
    """Per-sample gradient of each row's own cross-entropy with respect to its input."""
    x = _as_batch(net, x)
    targets = _check_targets(net, x, targets)

    layer_inputs, logits = _forward_cached(net, x)
    probs = softmax_with_temperature(logits, net.temperature)
    _, grad = _backpropagate(
        net, layer_inputs, (probs - targets) / net.temperature, need_weights=False
    )
    return grad


def probability_jacobian(net: Network, x: npt.ArrayLike) -> Tensor:
    """``d probs_c / d x_j`` for a single input, shape ``[n, d]``; one backward pass per class."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    x = _as_batch(net, x)

    layer_inputs, logits = _forward_cached(net, x)
    probs = softmax_with_temperature(logits, net.temperature)[0]

    jacobian = np.empty((net.num_classes, net.input_width))
    for c in range(net.num_classes):
        # d p_c / d z = p_c (e_c - p) / T
        logit_grad = -probs[c] * probs
        logit_grad[c] += probs[c]
        logit_grad = logit_grad / net.temperature
        _, grad = _backpropagate(net, layer_inputs, logit_grad[None, :], need_weights=False)
        jacobian[c] = grad[0]
    return jacobian


def mean_loss(net: Network, x: npt.ArrayLike, targets: npt.ArrayLike) -> float:
    _, probs = forward(net, x)
    return float(np.mean(cross_entropy(probs, targets)))


def accuracy(net: Network, data: LabeledDataset) -> float:
    """Fraction of rows whose predicted class equals the label's class."""
    if data.kind != "hard":
        raise InvalidArgumentError("accuracy needs hard labels")
    if len(data) == 0:
        raise InvalidArgumentError("accuracy of an empty dataset is undefined")
    return float(np.mean(predict(net, data.inputs) == data.classes()))
