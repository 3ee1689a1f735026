import math
from decimal import Decimal, localcontext

import numpy as np
import pytest

from src.engine import (
    DenseSpec,
    LabeledDataset,
    Network,
    ReluSpec,
    accuracy,
    backward,
    cross_entropy,
    forward,
    init_network,
    input_gradients,
    mlp,
    one_hot,
    probability_jacobian,
    softmax_with_temperature,
    zero_network,
)
from src.errors import InvalidArgumentError
from src.training import gradient_check
from tests.helpers import linear_network


class TestSoftmaxWithTemperature:
    def test_uniform_for_equal_logits(self):
        np.testing.assert_array_equal(
            softmax_with_temperature([0, 0, 0, 0], 7), [0.25, 0.25, 0.25, 0.25]
        )

    def test_temperature_two(self):
        np.testing.assert_allclose(
            softmax_with_temperature([math.log(4), 0], 2), [2 / 3, 1 / 3], atol=1e-12
        )

    def test_reference_values(self):
        np.testing.assert_allclose(
            softmax_with_temperature([1, 2, 3], 1),
            [0.090030573, 0.244728471, 0.665240956],
            atol=1e-8,
        )

    @pytest.mark.parametrize("temperature", [0, -1, float("nan"), float("inf")])
    def test_rejects_bad_temperature(self, temperature):
        with pytest.raises(InvalidArgumentError):
            softmax_with_temperature([1.0, 2.0], temperature)

    @pytest.mark.parametrize("value", [float("nan"), float("inf"), -float("inf")])
    def test_rejects_non_finite_logits(self, value):
        with pytest.raises(InvalidArgumentError):
            softmax_with_temperature([1.0, value], 1.0)

    def test_large_logits_do_not_overflow(self):
        probs = softmax_with_temperature([1000.0, 0.0, -1000.0], 1.0)
        assert np.all(np.isfinite(probs))
        assert probs[0] == 1.0

    def test_properties_over_random_logits(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(rng.integers(2, 11))
            z = rng.uniform(-10, 10, size=n)
            temperature = float(np.exp(rng.uniform(0, np.log(1000))))

            probs = softmax_with_temperature(z, temperature)
            assert abs(probs.sum() - 1.0) <= 1e-12
            assert np.all((probs > 0) & (probs < 1))
            assert np.argmax(probs) == np.argmax(z)
            np.testing.assert_allclose(
                probs, softmax_with_temperature(z / temperature, 1.0), rtol=0, atol=1e-15
            )

            flat = softmax_with_temperature(z, 1e6)
            assert np.max(np.abs(flat - 1.0 / n)) <= 1e-5

    def test_batched_rows_are_independent(self):
        z = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
        probs = softmax_with_temperature(z, 1.0)
        np.testing.assert_array_equal(probs[0], softmax_with_temperature(z[0], 1.0))
        np.testing.assert_array_equal(probs[1], softmax_with_temperature(z[1], 1.0))


def _decimal_forward(net: Network, x: np.ndarray) -> list[Decimal]:
    """Reference forward pass in 50-digit decimal arithmetic."""
    with localcontext() as ctx:
        ctx.prec = 50
        activation = [Decimal(float(value)) for value in x]
        dense_index = 0
        for layer in net.layers:
            if isinstance(layer, DenseSpec):
                weight, bias = net.weights[dense_index]
                activation = [
                    sum(
                        (activation[i] * Decimal(float(weight[i, j])) for i in range(len(activation))),
                        Decimal(float(bias[j])),
                    )
                    for j in range(weight.shape[1])
                ]
                dense_index += 1
            else:
                activation = [max(value, Decimal(0)) for value in activation]

        temperature = Decimal(net.temperature)
        exponentials = [(value / temperature).exp() for value in activation]
        total = sum(exponentials)
        return [value / total for value in exponentials]


class TestForward:
    def test_zero_network_is_uniform(self):
        net = zero_network(mlp(3, 4, 5))
        _, probs = forward(net, np.random.default_rng(0).uniform(size=(6, 3)))
        np.testing.assert_allclose(probs, np.full((6, 5), 0.2), atol=1e-15)

    def test_identity_dense_layer(self):
        net = linear_network(np.eye(2))
        logits, probs = forward(net, [[math.log(4), 0.0]])
        np.testing.assert_allclose(logits, [[math.log(4), 0.0]])
        np.testing.assert_allclose(probs, [[0.8, 0.2]], atol=1e-12)

    @pytest.mark.parametrize("temperature", [1.0, 20.0])
    def test_matches_high_precision_reference(self, temperature):
        net = init_network(mlp(4, 6, 6, 3), temperature=temperature, seed=5)
        x = np.random.default_rng(9).uniform(size=(4, 4))
        _, probs = forward(net, x)
        for row, sample in zip(probs, x):
            reference = [float(value) for value in _decimal_forward(net, sample)]
            np.testing.assert_allclose(row, reference, rtol=0, atol=1e-10)

    def test_deterministic(self, small_net):
        x = np.random.default_rng(1).uniform(size=(5, 4))
        first = forward(small_net, x)
        second = forward(small_net, x)
        np.testing.assert_array_equal(first[0], second[0])
        np.testing.assert_array_equal(first[1], second[1])

    def test_shape_mismatch(self, small_net):
        with pytest.raises(InvalidArgumentError):
            forward(small_net, np.zeros((2, 3)))
        with pytest.raises(InvalidArgumentError):
            forward(small_net, np.zeros(4))


class TestNetwork:
    def test_rejects_incompatible_layers(self):
        with pytest.raises(InvalidArgumentError):
            zero_network(
                [DenseSpec(in_features=3, out_features=4), ReluSpec(), DenseSpec(in_features=5, out_features=2)]
            )

    def test_rejects_single_class(self):
        with pytest.raises(InvalidArgumentError):
            zero_network(mlp(3, 1))

    def test_rejects_non_positive_temperature(self):
        with pytest.raises(InvalidArgumentError):
            zero_network(mlp(3, 2), temperature=0.0)

    def test_init_is_seeded_and_scaled(self):
        first = init_network(mlp(16, 8, 3), temperature=1.0, seed=42, init_scale=2.0)
        second = init_network(mlp(16, 8, 3), temperature=1.0, seed=42, init_scale=2.0)
        other = init_network(mlp(16, 8, 3), temperature=1.0, seed=43, init_scale=2.0)

        for (w1, b1), (w2, _), (w3, _) in zip(first.weights, second.weights, other.weights):
            np.testing.assert_array_equal(w1, w2)
            assert not np.array_equal(w1, w3)
            assert np.all(np.abs(w1) <= 2.0 / np.sqrt(w1.shape[0]))
            np.testing.assert_array_equal(b1, 0.0)


class TestCrossEntropy:
    def test_perfect_prediction(self):
        assert cross_entropy([1.0, 0.0], [1.0, 0.0]) <= 1e-10

    def test_even_split(self):
        assert cross_entropy([0.5, 0.5], [1.0, 0.0]) == pytest.approx(math.log(2), abs=1e-15)

    def test_soft_target(self):
        expected = -(0.1 * math.log(0.2) + 0.2 * math.log(0.3) + 0.7 * math.log(0.5))
        assert expected == pytest.approx(0.886941, abs=1e-6)
        assert cross_entropy([0.2, 0.3, 0.5], [0.1, 0.2, 0.7]) == pytest.approx(expected, abs=1e-12)

    def test_clamps_zero_probabilities(self):
        assert cross_entropy([0.0, 1.0], [1.0, 0.0]) == pytest.approx(-math.log(1e-12))

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            cross_entropy([0.5, 0.5], [1.0, 0.0, 0.0])


class TestBackward:
    def test_targets_equal_to_probs_give_zero_gradient(self, small_net):
        x = np.random.default_rng(3).uniform(size=(3, 4))
        _, probs = forward(small_net, x)
        gradients = backward(small_net, x, probs)

        np.testing.assert_array_equal(gradients.logit_grad, 0.0)
        for weight_grad, bias_grad in gradients.weight_grads:
            np.testing.assert_array_equal(weight_grad, 0.0)
            np.testing.assert_array_equal(bias_grad, 0.0)

    def test_logit_gradient_formula(self, small_net):
        x = np.random.default_rng(4).uniform(size=(3, 4))
        targets = one_hot([0, 1, 2], 3)
        net = small_net.with_temperature(20.0)
        _, probs = forward(net, x)
        gradients = backward(net, x, targets)
        np.testing.assert_allclose(gradients.logit_grad, (probs - targets) / (3 * 20.0))

    @pytest.mark.parametrize("temperature", [2.0, 20.0, 100.0])
    def test_temperature_divides_logit_gradient(self, small_net, temperature):
        x = np.random.default_rng(5).uniform(size=(3, 4))
        offset = np.array([[0.01, -0.02, 0.01], [-0.01, 0.0, 0.01], [0.005, 0.005, -0.01]])

        def logit_grad(net):
            _, probs = forward(net, x)
            return backward(net, x, probs - offset).logit_grad

        unit = logit_grad(small_net)
        hot = logit_grad(small_net.with_temperature(temperature))
        np.testing.assert_allclose(hot, unit / temperature, rtol=0, atol=1e-12)

    def test_input_gradients_are_per_sample(self, small_net):
        x = np.random.default_rng(6).uniform(size=(4, 4))
        targets = one_hot([0, 1, 2, 0], 3)
        per_sample = input_gradients(small_net, x, targets)
        batch = backward(small_net, x, targets).input_grad
        np.testing.assert_allclose(per_sample, 4 * batch, rtol=1e-12, atol=1e-15)

    def test_probability_jacobian_rows(self, small_net):
        x = np.random.default_rng(7).uniform(size=4)
        jacobian = probability_jacobian(small_net, x)

        assert jacobian.shape == (3, 4)
        # probabilities sum to one, so their gradients sum to zero
        np.testing.assert_allclose(jacobian.sum(axis=0), 0.0, atol=1e-12)

        h = 1e-6
        for j in range(4):
            step = np.zeros(4)
            step[j] = h
            _, upper = forward(small_net, (x + step)[None, :])
            _, lower = forward(small_net, (x - step)[None, :])
            np.testing.assert_allclose(
                jacobian[:, j], (upper[0] - lower[0]) / (2 * h), rtol=1e-5, atol=1e-9
            )

    def test_rejects_invalid_targets(self, small_net):
        x = np.zeros((2, 4))
        with pytest.raises(InvalidArgumentError):
            backward(small_net, x, np.zeros((2, 3)))
        with pytest.raises(InvalidArgumentError):
            backward(small_net, x, one_hot([0, 1, 2], 3))


class TestGradientCheck:
    @pytest.mark.parametrize("seed", range(20))
    def test_seeded_networks(self, seed):
        dense_layers = 1 + seed % 3
        temperature = (1.0, 20.0, 100.0)[(seed // 3) % 3]
        widths = [4] + [5] * (dense_layers - 1) + [3]
        net = init_network(mlp(*widths), temperature=temperature, seed=seed, init_scale=1.5)

        rng = np.random.default_rng(100 + seed)
        x = rng.uniform(size=(3, 4))
        if seed % 2:
            targets = rng.dirichlet(np.ones(3), size=3)
        else:
            targets = one_hot(rng.integers(0, 3, size=3), 3)

        assert gradient_check(net, x, targets, h=1e-5) < 1e-4

    def test_zero_network(self):
        net = zero_network(mlp(4, 5, 3))
        x = np.random.default_rng(0).uniform(size=(3, 4))
        assert gradient_check(net, x, np.full((3, 3), 1 / 3), h=1e-5) <= 1e-6

    def test_error_grows_with_step(self):
        net = init_network(mlp(4, 5, 3), temperature=1.0, seed=8, init_scale=2.0)
        rng = np.random.default_rng(8)
        x = rng.uniform(size=(3, 4))
        targets = one_hot([0, 1, 2], 3)
        assert gradient_check(net, x, targets, h=1e-1) > gradient_check(net, x, targets, h=1e-5)

    def test_rejects_non_positive_step(self, small_net):
        with pytest.raises(InvalidArgumentError):
            gradient_check(small_net, np.zeros((1, 4)), one_hot([0], 3), h=0.0)


class TestAccuracy:
    def _class_zero_network(self):
        return linear_network(np.zeros((3, 4)), bias=[5.0, 0.0, 0.0, 0.0])

    def test_all_correct(self):
        data = LabeledDataset(np.zeros((6, 3)), one_hot([0] * 6, 4), "hard")
        assert accuracy(self._class_zero_network(), data) == 1.0

    def test_all_wrong(self):
        data = LabeledDataset(np.zeros((6, 3)), one_hot([1] * 6, 4), "hard")
        assert accuracy(self._class_zero_network(), data) == 0.0

    def test_matches_enumeration(self, small_net):
        rng = np.random.default_rng(10)
        x = rng.uniform(size=(10, 4))
        classes = rng.integers(0, 3, size=10)
        data = LabeledDataset(x, one_hot(classes, 3), "hard")

        correct = 0
        for sample, label in zip(x, classes):
            _, probs = forward(small_net, sample[None, :])
            correct += int(np.argmax(probs[0]) == label)

        assert accuracy(small_net, data) == correct / 10

    def test_ties_go_to_lowest_index(self):
        net = zero_network(mlp(2, 3))
        data = LabeledDataset(np.zeros((2, 2)), one_hot([0, 0], 3), "hard")
        assert accuracy(net, data) == 1.0

    def test_rejects_soft_labels(self, small_net):
        data = LabeledDataset(np.zeros((1, 4)), np.full((1, 3), 1 / 3), "soft")
        with pytest.raises(InvalidArgumentError):
            accuracy(small_net, data)


class TestLabeledDataset:
    def test_rejects_rows_not_summing_to_one(self):
        with pytest.raises(InvalidArgumentError):
            LabeledDataset(np.zeros((1, 2)), np.array([[0.5, 0.4]]), "soft")

    def test_rejects_soft_rows_marked_hard(self):
        with pytest.raises(InvalidArgumentError):
            LabeledDataset(np.zeros((1, 2)), np.array([[0.5, 0.5]]), "hard")

    def test_class_counts(self):
        data = LabeledDataset(np.zeros((4, 1)), one_hot([0, 2, 2, 1], 3), "hard")
        assert data.class_counts() == {0: 1, 1: 1, 2: 2}
