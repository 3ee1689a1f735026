"""Text model files.

Every real number is stored as a hexadecimal float string (``float.hex``), so a
write/read round trip is value-exact for all finite 64-bit values.
"""

from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ValidationError

from src.engine import LayerSpec, Network, Tensor
from src.errors import ModelFormatError
from utility.logging_config import get_logger

logger = get_logger("model_io")

FORMAT_VERSION = 1


class DenseWeights(BaseModel):
    shape: tuple[int, int]
    weight: list[str]
    bias: list[str]


class ModelDocument(BaseModel):
    format_version: Literal[1] = FORMAT_VERSION
    layers: list[LayerSpec]
    temperature: str
    prng: str
    seed: int
    dense: list[DenseWeights]


def _to_hex(values: Tensor) -> list[str]:
    return [float(value).hex() for value in values.reshape(-1)]


def _from_hex(values: list[str], shape: tuple[int, ...]) -> Tensor:
    try:
        array = np.array([float.fromhex(value) for value in values], dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise ModelFormatError(f"weight entry is not a hexadecimal float: {e}") from e
    if array.size != int(np.prod(shape)):
        raise ModelFormatError(
            f"expected {int(np.prod(shape))} values for shape {list(shape)}, "
            f"found {array.size}"
        )
    return array.reshape(shape)


def dumps_model(net: Network) -> str:
    document = ModelDocument(
        layers=net.layers,
        temperature=float(net.temperature).hex(),
        prng=net.prng,
        seed=net.seed,
        dense=[
            DenseWeights(shape=weight.shape, weight=_to_hex(weight), bias=_to_hex(bias))
            for weight, bias in net.weights
        ],
    )
    return document.model_dump_json(indent=2) + "\n"


def loads_model(text: str) -> Network:
    try:
        document = ModelDocument.model_validate_json(text)
    except ValidationError as e:
        raise ModelFormatError(f"malformed model document: {e}") from e

    weights = []
    for dense in document.dense:
        weight = _from_hex(dense.weight, dense.shape)
        bias = _from_hex(dense.bias, (dense.shape[1],))
        weights.append((weight, bias))

    try:
        temperature = float.fromhex(document.temperature)
    except ValueError as e:
        raise ModelFormatError(f"temperature is not a hexadecimal float: {e}") from e

    return Network(
        layers=document.layers,
        weights=weights,
        temperature=temperature,
        seed=document.seed,
        prng=document.prng,
    )


def save_model(net: Network, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_model(net))
    logger.info(f"wrote model (T={net.temperature:g}) to {path}")
    return path


def load_model(path: Path) -> Network:
    path = Path(path)
    return loads_model(path.read_text())
