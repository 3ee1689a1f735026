import numpy as np

from src.engine import DenseSpec, Network


def linear_network(weight, bias=None, temperature=1.0) -> Network:
    """Single dense layer with the given ``[in, out]`` weight matrix."""
    weight = np.asarray(weight, dtype=np.float64)
    if bias is None:
        bias = np.zeros(weight.shape[1])
    return Network(
        layers=[DenseSpec(in_features=weight.shape[0], out_features=weight.shape[1])],
        weights=[(weight, np.asarray(bias, dtype=np.float64))],
        temperature=temperature,
    )


def same_weights(first: Network, second: Network) -> bool:
    return all(
        np.array_equal(w1, w2) and np.array_equal(b1, b2)
        for (w1, b1), (w2, b2) in zip(first.weights, second.weights)
    )
