from __future__ import annotations

import csv
import io
import math
from typing import Literal

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, Field, model_validator

from src.engine import (
    LabeledDataset,
    Network,
    Tensor,
    input_gradients,
    predict,
    probability_jacobian,
)
from src.errors import InvalidArgumentError
from utility.logging_config import get_logger
from utility.runtime import derive_rng

logger = get_logger("attacks")

REPORT_FIELDS = ["index", "true_class", "clean_class", "adv_class", "linf", "l0", "success"]


class FgsmConfig(BaseModel):
    method: Literal["fgsm"] = "fgsm"
    epsilon: float = Field(default=0.3, ge=0.0, le=1.0)


class SaliencyConfig(BaseModel):
    """Greedy single-feature Jacobian saliency attack.

    ``gamma`` bounds the fraction of input features that may be modified; each
    modified feature moves by ``theta`` (then clamped to ``[0, 1]``).

    ``stop_without_gain`` ends the search once no unmodified feature has positive
    saliency, the way cleverhans' JSMA gives up when its search domain is
    exhausted. Turned off, the attack keeps moving the best remaining feature
    (lowest index among equal scores) until it succeeds or the budget runs out.
    """

    method: Literal["saliency"] = "saliency"
    theta: float = Field(default=1.0, ge=-1.0, le=1.0)
    gamma: float = Field(default=0.145, gt=0.0, le=1.0)
    target_rule: Literal["next-class", "fixed", "random-other"] = "next-class"
    target_class: int | None = Field(default=None, ge=0)
    seed: int = Field(default=0, ge=0)
    stop_without_gain: bool = True

    @model_validator(mode="after")
    def check_rule(self):
        if self.theta == 0.0:
            raise ValueError("theta must be non-zero")
        if self.target_rule == "fixed" and self.target_class is None:
            raise ValueError("target_rule 'fixed' needs target_class")
        return self

    def budget(self, input_width: int) -> int:
        return math.floor(self.gamma * input_width)

    def target_for(self, true_class: int, num_classes: int, index: int) -> int:
        if self.target_rule == "next-class":
            return (true_class + 1) % num_classes
        if self.target_rule == "fixed":
            return self.target_class
        others = [c for c in range(num_classes) if c != true_class]
        return int(derive_rng(self.seed, index).choice(others))


AttackConfig = FgsmConfig | SaliencyConfig


class AttackRecord(BaseModel):
    index: int
    true_class: int
    clean_class: int
    adv_class: int
    linf: float
    l0: int
    success: bool


class AttackReport(BaseModel):
    records: list[AttackRecord]
    success_rate: float

    @property
    def success_count(self) -> int:
        return sum(record.success for record in self.records)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=REPORT_FIELDS, lineterminator="\n")
        writer.writeheader()
        for record in self.records:
            row = record.model_dump()
            row["linf"] = repr(record.linf)
            row["success"] = int(record.success)
            writer.writerow(row)
        return buffer.getvalue()


def _check_box(x: Tensor) -> None:
    if not np.all(np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise InvalidArgumentError("attack inputs must lie in [0, 1]")


def _project_linf(candidate: Tensor, x: Tensor, epsilon: float) -> Tensor:
    """Clamp to ``[0, 1]`` and pull coordinates whose rounded distance from ``x`` exceeds ``epsilon`` back by one ulp."""
    candidate = np.clip(candidate, 0.0, 1.0)
    while True:
        over = np.abs(candidate - x) > epsilon
        if not over.any():
            return candidate
        candidate[over] = np.nextafter(candidate[over], x[over])


def fgsm_batch(
    net: Network, x: npt.ArrayLike, y_true: npt.ArrayLike, epsilon: float
) -> Tensor:
    """Untargeted FGSM on each row of ``x`` at the network's current temperature."""
    if not 0.0 <= epsilon <= 1.0:
        raise InvalidArgumentError(f"epsilon must lie in [0, 1], got {epsilon}")
    x = np.asarray(x, dtype=np.float64)
    _check_box(x)

    gradient = input_gradients(net, x, y_true)
    return _project_linf(x + epsilon * np.sign(gradient), x, epsilon)


def fgsm(net: Network, x: npt.ArrayLike, y_true: npt.ArrayLike, epsilon: float) -> Tensor:
    """``clamp(x + epsilon * sign(grad_x loss), 0, 1)`` for a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    y_true = np.asarray(y_true, dtype=np.float64)
    return fgsm_batch(net, x[None, :], y_true[None, :], epsilon)[0]


def saliency_attack(
    net: Network, x: npt.ArrayLike, target_class: int, cfg: SaliencyConfig
) -> tuple[Tensor, bool, int]:
    """Greedily raise the target class probability one feature at a time.

    Each iteration scores unmodified features by
    ``dp_t/dx_j - sum_{c != t} dp_c/dx_j`` where the first term is positive and
    the second negative, and moves the best one (lowest index on ties) by
    ``theta``. Features that clamping would leave unchanged are skipped. Stops on
    success, when ``floor(gamma * d)`` features have been modified, when no
    feature can still move, or (with ``cfg.stop_without_gain``) when no feature
    has positive saliency.

    Returns ``(x_adv, succeeded, iterations)``.
    """
    if not 0 <= target_class < net.num_classes:
        raise InvalidArgumentError(
            f"target class {target_class} outside 0..{net.num_classes - 1}"
        )
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    _check_box(x)

    adversarial = x.copy()
    budget = cfg.budget(net.input_width)
    modified = np.zeros(net.input_width, dtype=bool)
    iterations = 0

    while True:
        if predict(net, adversarial[None, :])[0] == target_class:
            return adversarial, True, iterations
        if iterations >= budget:
            return adversarial, False, iterations

        jacobian = probability_jacobian(net, adversarial)
        target_grad = jacobian[target_class]
        other_grad = jacobian.sum(axis=0) - target_grad

        moved = np.clip(adversarial + cfg.theta, 0.0, 1.0)
        candidates = ~modified & (moved != adversarial)
        saliency = np.where(
            candidates & (target_grad > 0) & (other_grad < 0),
            target_grad - other_grad,
            0.0,
        )

        if not candidates.any():
            return adversarial, False, iterations
        if cfg.stop_without_gain and saliency.max() <= 0.0:
            return adversarial, False, iterations

        feature = int(np.argmax(np.where(candidates, saliency, -np.inf)))
        adversarial[feature] = moved[feature]
        modified[feature] = True
        iterations += 1


def success_rate(
    net: Network,
    attack: AttackConfig,
    test: LabeledDataset,
    only_initially_correct: bool = False,
) -> AttackReport:
    """Craft one adversarial example per test sample and measure misclassification.

    Success means the adversarial example's predicted class differs from the true
    class. All samples count unless ``only_initially_correct`` restricts the rate
    to those the clean network classifies correctly.
    """
    if test.kind != "hard":
        raise InvalidArgumentError("attacks are evaluated on hard-labeled data")
    if len(test) == 0:
        raise InvalidArgumentError("cannot attack an empty test set")

    true_classes = test.classes()
    clean_classes = predict(net, test.inputs)

    if isinstance(attack, FgsmConfig):
        adversarial = fgsm_batch(net, test.inputs, test.labels, attack.epsilon)
    else:
        adversarial = test.inputs.copy()
        for index, (x, true_class) in enumerate(zip(test.inputs, true_classes)):
            target = attack.target_for(int(true_class), net.num_classes, index)
            if target == true_class:
                continue
            adversarial[index], _, _ = saliency_attack(net, x, target, attack)

    adv_classes = predict(net, adversarial)
    distortion = np.abs(adversarial - test.inputs)

    records = [
        AttackRecord(
            index=index,
            true_class=int(true_classes[index]),
            clean_class=int(clean_classes[index]),
            adv_class=int(adv_classes[index]),
            linf=float(distortion[index].max()),
            l0=int(np.count_nonzero(distortion[index])),
            success=bool(adv_classes[index] != true_classes[index]),
        )
        for index in range(len(test))
    ]

    counted = [
        record
        for record in records
        if not only_initially_correct or record.clean_class == record.true_class
    ]
    rate = sum(record.success for record in counted) / len(counted) if counted else 0.0

    logger.info(
        f"{attack.method} on {len(test)} samples at T={net.temperature:g}: "
        f"success rate {rate:.4f}"
    )
    return AttackReport(records=records, success_rate=rate)
