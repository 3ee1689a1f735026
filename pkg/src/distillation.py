from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, field_validator

from src.engine import (
    LabeledDataset,
    LayerSpec,
    Network,
    Tensor,
    TrainConfig,
    forward,
    init_network,
    validate_architecture,
)
from src.errors import InvalidArgumentError
from src.training import train_sgd
from utility.logging_config import get_logger, log_timing

logger = get_logger("distillation")


class DistillationConfig(BaseModel):
    """Teacher and student share ``architecture``; only their training runs differ."""

    temperature: float = Field(ge=1.0)
    architecture: list[LayerSpec]
    teacher_train: TrainConfig
    student_train: TrainConfig
    # "unit" labels the training set with the teacher reset to T=1
    soft_label_temperature: Literal["training", "unit"] = "training"

    @field_validator("architecture")
    @classmethod
    def check_architecture(cls, value):
        validate_architecture(value)
        return value


def assert_same_architecture(first: Network, second: Network) -> None:
    if first.architecture() != second.architecture():
        raise InvalidArgumentError(
            f"architectures differ: {first.architecture()} vs {second.architecture()}"
        )


def train_teacher(data: LabeledDataset, cfg: DistillationConfig, log=None) -> Network:
    """Train the first instance on hard labels at the distillation temperature."""
    if data.kind != "hard":
        raise InvalidArgumentError("the teacher is trained on hard labels")

    initial = init_network(
        cfg.architecture,
        cfg.temperature,
        cfg.teacher_train.seed,
        cfg.teacher_train.init_scale,
    )
    return train_sgd(initial, data, cfg.teacher_train, log=log)


def soft_labels(
    teacher: Network, inputs: Tensor, temperature: float | None = None
) -> LabeledDataset:
    """Relabel ``inputs`` with the teacher's probability vectors.

    The teacher runs at its own (training) temperature unless ``temperature``
    overrides it.
    """
    if temperature is not None:
        teacher = teacher.with_temperature(temperature)

    _, probs = forward(teacher, inputs)
    return LabeledDataset(np.asarray(inputs, dtype=np.float64), probs, "soft")


def train_distilled(
    soft_data: LabeledDataset, cfg: DistillationConfig, log=None
) -> Network:
    """Train a freshly initialized instance on ``(X, f(X))`` at the distillation temperature."""
    if soft_data.kind != "soft":
        raise InvalidArgumentError(
            "the distilled network is trained on soft labels, got hard labels"
        )

    initial = init_network(
        cfg.architecture,
        cfg.temperature,
        cfg.student_train.seed,
        cfg.student_train.init_scale,
    )
    return train_sgd(initial, soft_data, cfg.student_train, log=log)


def deploy(net: Network) -> Network:
    """Reset the softmax temperature to 1; weights are untouched."""
    if net.temperature == 1.0:
        return net
    return net.with_temperature(1.0)


@dataclass
class DistillationOutcome:
    teacher: Network
    soft_data: LabeledDataset
    student: Network
    deployed: Network


def run_pipeline(data: LabeledDataset, cfg: DistillationConfig, log=None) -> DistillationOutcome:
    """Teacher -> soft labels -> distilled student -> deployment at T=1."""
    log = log or logger

    with log_timing(log, f"teacher training at T={cfg.temperature:g}"):
        teacher = train_teacher(data, cfg, log=log)

    if teacher.temperature != cfg.temperature:
        raise InvalidArgumentError(
            f"teacher runs at T={teacher.temperature}, expected T={cfg.temperature}"
        )

    label_temperature = 1.0 if cfg.soft_label_temperature == "unit" else None
    soft_data = soft_labels(teacher, data.inputs, temperature=label_temperature)

    with log_timing(log, f"distilled training at T={cfg.temperature:g}"):
        student = train_distilled(soft_data, cfg, log=log)

    assert_same_architecture(teacher, student)
    return DistillationOutcome(
        teacher=teacher, soft_data=soft_data, student=student, deployed=deploy(student)
    )
