"""MNIST IDX ingestion, desk-scale subsetting and synthetic test corpora.

IDX layout (all integers big-endian)::

    [offset] [type]          [value]          [description]
    0000     32 bit integer  2051 / 2049      magic number (images / labels)
    0004     32 bit integer  N                number of items
    0008     32 bit integer  28               rows     (images only)
    0012     32 bit integer  28               columns  (images only)
    ....     unsigned byte   ??               pixel / label
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import BaseModel

from src.engine import LabeledDataset, Tensor, one_hot
from src.errors import DataFileMissingError, IdxFormatError, InvalidArgumentError
from utility.logging_config import get_logger
from utility.runtime import derive_rng

logger = get_logger("dataset")

LABEL_MAGIC = 2049
IMAGE_MAGIC = 2051
IMAGE_SIDE = 28
IMAGE_PIXELS = IMAGE_SIDE * IMAGE_SIDE
NUM_DIGITS = 10

TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"

# spawn keys of the PRNG streams used by this module
LIMIT_STREAM = 0
BLOB_STREAM = 1

# blobs are clipped to [min center - margin, max center + margin] per axis
BLOB_MARGIN = 4.0
MAX_CENTER_ATTEMPTS = 10_000


class IdxHeader(BaseModel):
    magic: int
    dims: list[int]

    @property
    def size(self) -> int:
        return 4 + 4 * len(self.dims)

    @property
    def payload_length(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    def encode(self) -> bytes:
        return struct.pack(f">I{len(self.dims)}I", self.magic, *self.dims)


def parse_idx_header(raw: bytes, magic: int, ndims: int) -> IdxHeader:
    if len(raw) < 4:
        raise IdxFormatError("magic", f"file is {len(raw)} bytes, too short for a header")

    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise IdxFormatError("magic", f"expected {magic}, found {found}")

    header_size = 4 + 4 * ndims
    if len(raw) < header_size:
        raise IdxFormatError(
            "dims", f"header needs {header_size} bytes, file has {len(raw)}"
        )

    dims = list(struct.unpack(f">{ndims}I", raw[4:header_size]))
    return IdxHeader(magic=found, dims=dims)


def _payload(raw: bytes, header: IdxHeader) -> np.ndarray:
    available = len(raw) - header.size
    if available < header.payload_length:
        raise IdxFormatError(
            "payload",
            f"short payload: expected {header.payload_length} bytes, found {available}",
        )
    if available > header.payload_length:
        raise IdxFormatError(
            "payload",
            f"{available - header.payload_length} trailing bytes after "
            f"{header.payload_length}-byte payload",
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header.size)


def load_idx_images(raw: bytes) -> Tensor:
    """Images as ``[N, 784]`` rows of ``pixel / 255``."""
    header = parse_idx_header(raw, IMAGE_MAGIC, ndims=3)
    if header.dims[1:] != [IMAGE_SIDE, IMAGE_SIDE]:
        raise IdxFormatError(
            "dims", f"expected [N, {IMAGE_SIDE}, {IMAGE_SIDE}], found {header.dims}"
        )

    pixels = _payload(raw, header)
    return pixels.reshape(header.dims[0], IMAGE_PIXELS).astype(np.float64) / 255.0


def load_idx_labels(raw: bytes) -> Tensor:
    """Labels as ``[N, 10]`` indicator rows."""
    header = parse_idx_header(raw, LABEL_MAGIC, ndims=1)
    labels = _payload(raw, header)

    invalid = np.flatnonzero(labels >= NUM_DIGITS)
    if invalid.size:
        index = int(invalid[0])
        raise IdxFormatError(
            "label", f"label {int(labels[index])} at index {index} is outside 0..9"
        )

    return one_hot(labels, NUM_DIGITS)


def encode_idx_images(images: Tensor) -> bytes:
    pixels = np.rint(np.asarray(images) * 255.0).astype(np.uint8)
    header = IdxHeader(magic=IMAGE_MAGIC, dims=[pixels.shape[0], IMAGE_SIDE, IMAGE_SIDE])
    return header.encode() + pixels.tobytes()


def encode_idx_labels(labels: Tensor) -> bytes:
    classes = np.argmax(np.asarray(labels), axis=1).astype(np.uint8)
    header = IdxHeader(magic=LABEL_MAGIC, dims=[classes.shape[0]])
    return header.encode() + classes.tobytes()


@dataclass(frozen=True)
class Split:
    train: LabeledDataset
    test: LabeledDataset


def _read(path: Path) -> bytes:
    if not path.is_file():
        raise DataFileMissingError(path)
    return path.read_bytes()


def load_pair(images_path: Path, labels_path: Path) -> LabeledDataset:
    images = load_idx_images(_read(images_path))
    labels = load_idx_labels(_read(labels_path))
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            "dims",
            f"{images_path.name} has {images.shape[0]} images but "
            f"{labels_path.name} has {labels.shape[0]} labels",
        )
    return LabeledDataset(images, labels, "hard")


def load_split(data_dir: Path) -> Split:
    """Read the four official MNIST files from ``data_dir``."""
    data_dir = Path(data_dir)
    split = Split(
        train=load_pair(data_dir / TRAIN_IMAGES, data_dir / TRAIN_LABELS),
        test=load_pair(data_dir / TEST_IMAGES, data_dir / TEST_LABELS),
    )
    logger.info(
        f"loaded MNIST from {data_dir}: {len(split.train)} train, {len(split.test)} test"
    )
    return split


def limit(data: LabeledDataset, n: int, seed: int) -> LabeledDataset:
    """Seeded uniform sample of ``n`` rows without replacement.

    Class counts of the subset are logged and available as ``subset.class_counts()``.
    """
    if n <= 0:
        raise InvalidArgumentError(f"subset size must be positive, got {n}")
    if n > len(data):
        raise InvalidArgumentError(f"cannot take {n} samples from {len(data)}")

    rng = derive_rng(seed, LIMIT_STREAM)
    subset = data.subset(rng.choice(len(data), size=n, replace=False))

    if subset.kind == "hard":
        logger.info(f"limited {len(data)} -> {n} samples, class counts {subset.class_counts()}")
    return subset


def synthetic_blobs(
    seed: int, n_per_class: int, classes: int, d: int, separation: float
) -> LabeledDataset:
    """Unit-variance Gaussian blobs rescaled into ``[0, 1]^d``.

    Centers are drawn uniformly from ``[-separation * classes, separation * classes]^d``
    and rejected until pairwise at least ``separation`` apart. Points are clipped to
    the box spanned by the centers widened by 4 standard deviations, and that box is
    mapped affinely onto the unit cube.
    """
    if classes < 2:
        raise InvalidArgumentError(f"need at least 2 classes, got {classes}")
    if not separation > 0:
        raise InvalidArgumentError(f"separation must be positive, got {separation}")
    if n_per_class <= 0 or d <= 0:
        raise InvalidArgumentError("n_per_class and d must be positive")

    rng = derive_rng(seed, BLOB_STREAM)
    spread = separation * classes

    centers: list[np.ndarray] = []
    attempts = 0
    while len(centers) < classes:
        attempts += 1
        if attempts > MAX_CENTER_ATTEMPTS * classes:
            raise InvalidArgumentError(
                f"could not place {classes} centers {separation} apart in {d} dimensions"
            )
        candidate = rng.uniform(-spread, spread, size=d)
        if all(np.linalg.norm(candidate - center) >= separation for center in centers):
            centers.append(candidate)

    center_array = np.stack(centers)
    points = np.concatenate(
        [center + rng.standard_normal((n_per_class, d)) for center in center_array]
    )

    low = center_array.min(axis=0) - BLOB_MARGIN
    high = center_array.max(axis=0) + BLOB_MARGIN
    inputs = (np.clip(points, low, high) - low) / (high - low)
    # (x - low) / (high - low) may round a hair past 1
    inputs = np.clip(inputs, 0.0, 1.0)

    labels = one_hot(np.repeat(np.arange(classes), n_per_class), classes)
    return LabeledDataset(inputs, labels, "hard")
