"""Experiment orchestration: baseline, temperature sweep, reports.

Seeds are derived with ``utility.runtime.derive_seed``:

* data subsets: ``derive_seed(master_seed, DATA_STREAM, 0)`` (train) and
  ``derive_seed(master_seed, DATA_STREAM, 1)`` (test), shared by every run of a
  sweep so all temperatures are evaluated on the same test subset;
* baseline: ``derive_seed(master_seed, BASELINE_STREAM)``;
* temperature ``i`` of the grid: ``derive_seed(master_seed, TEMPERATURE_STREAM, i)``,
  whose children ``0`` and ``1`` seed the teacher and the student.
"""

from __future__ import annotations

import csv
import io
import time
import tomllib
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import matplotlib
import numpy as np
from matplotlib.figure import Figure
from pydantic import BaseModel, Field, field_validator

from src.attacks import FgsmConfig, SaliencyConfig, success_rate
from src.dataset import Split, limit, load_split
from src.distillation import DistillationConfig, run_pipeline
from src.engine import (
    LabeledDataset,
    Network,
    TrainConfig,
    accuracy,
    forward,
    init_network,
    input_gradients,
    mlp,
)
from src.errors import InvalidArgumentError
from src.model_io import save_model
from src.training import train_sgd
from utility.logging_config import bind_run, get_logger, log_timing
from utility.runtime import derive_seed, ordered_map

logger = get_logger("harness")

DATA_STREAM = 0
BASELINE_STREAM = 1
TEMPERATURE_STREAM = 2

CSV_FIELDS = [
    "temperature",
    "clean_accuracy",
    "fgsm_success_rate",
    "saliency_success_rate",
    "wall_time_s",
]
MECHANISM_FIELDS = ["temperature", "median_gradient_l1", "error"]


class SweepConfig(BaseModel):
    temperatures: list[float] = [1, 2, 5, 10, 20, 30, 50, 100]
    epsilon: float = Field(default=0.3, ge=0.0, le=1.0)
    train_limit: int = Field(default=10_000, gt=0)
    test_limit: int = Field(default=2_000, gt=0)
    master_seed: int = Field(default=0, ge=0, lt=2**64)
    hidden: list[int] = [200, 200]
    train: TrainConfig = TrainConfig()
    include_saliency: bool = False
    saliency: SaliencyConfig = SaliencyConfig()
    soft_label_temperature: Literal["training", "unit"] = "training"
    only_initially_correct: bool = False
    # restricts the gradient median to correctly classified rows at this confidence
    shrinkage_min_confidence: float | None = Field(default=None, ge=0.0, le=1.0)
    # wall_time_s is the only non-deterministic CSV column
    record_wall_time: bool = True
    workers: int = Field(default=1, ge=1)
    output: Path = Path("runs/sweep.csv")

    @field_validator("temperatures")
    @classmethod
    def check_temperatures(cls, value):
        if not value:
            raise ValueError("at least one temperature is required")
        if any(t < 1 for t in value):
            raise ValueError("temperatures must be >= 1")
        if any(a >= b for a, b in zip(value, value[1:])):
            raise ValueError("temperatures must be sorted ascending and distinct")
        return value

    def architecture(self, input_width: int, num_classes: int):
        return mlp(input_width, *self.hidden, num_classes)


class SweepRow(BaseModel):
    temperature: float
    clean_test_accuracy: float | None = Field(default=None, ge=0.0, le=1.0)
    fgsm_success_rate: float | None = Field(default=None, ge=0.0, le=1.0)
    saliency_success_rate: float | None = Field(default=None, ge=0.0, le=1.0)
    wall_time_seconds: float = 0.0
    median_gradient_l1: float | None = None
    error: str | None = None


def load_sweep_config(path: Path) -> SweepConfig:
    """Read a TOML sweep document (``[train]`` and ``[saliency]`` tables nest)."""
    with Path(path).open("rb") as f:
        return SweepConfig.model_validate(tomllib.load(f))


def prepare_data(
    cfg: SweepConfig, split: Split | None = None, data_dir: Path | None = None
) -> Split:
    """Seeded desk-scale subsets of the train and test sets."""
    if split is None:
        if data_dir is None:
            raise InvalidArgumentError(
                "no MNIST data directory configured (set MNIST_DATA_DIR)"
            )
        split = load_split(data_dir)

    train_seed = derive_seed(cfg.master_seed, DATA_STREAM, 0)
    test_seed = derive_seed(cfg.master_seed, DATA_STREAM, 1)
    return Split(
        train=limit(split.train, min(cfg.train_limit, len(split.train)), train_seed),
        test=limit(split.test, min(cfg.test_limit, len(split.test)), test_seed),
    )


def gradient_shrinkage(
    net: Network, test: LabeledDataset, min_confidence: float | None = None
) -> float:
    """Median L1 norm of the per-sample input gradient of the loss.

    By default the median runs over the whole test subset, misclassified rows
    included. With ``min_confidence`` only rows the network classifies correctly
    with top probability at least ``min_confidence`` are measured.
    """
    if min_confidence is not None:
        if not 0.0 <= min_confidence <= 1.0:
            raise InvalidArgumentError(
                f"min_confidence must lie in [0, 1], got {min_confidence}"
            )
        _, probs = forward(net, test.inputs)
        keep = (probs.argmax(axis=1) == test.classes()) & (probs.max(axis=1) >= min_confidence)
        if not keep.any():
            raise InvalidArgumentError(
                f"no test sample is classified correctly with confidence >= {min_confidence}"
            )
        test = test.subset(np.flatnonzero(keep))

    gradients = input_gradients(net, test.inputs, test.labels)
    return float(np.median(np.abs(gradients).sum(axis=1)))


def evaluate(net: Network, test: LabeledDataset, cfg: SweepConfig) -> SweepRow:
    fgsm_report = success_rate(
        net, FgsmConfig(epsilon=cfg.epsilon), test, cfg.only_initially_correct
    )
    saliency_rate = None
    if cfg.include_saliency:
        saliency_rate = success_rate(
            net, cfg.saliency, test, cfg.only_initially_correct
        ).success_rate

    return SweepRow(
        temperature=net.temperature,
        clean_test_accuracy=accuracy(net, test),
        fgsm_success_rate=fgsm_report.success_rate,
        saliency_success_rate=saliency_rate,
        median_gradient_l1=gradient_shrinkage(net, test, cfg.shrinkage_min_confidence),
    )


def _train_config(cfg: SweepConfig, seed: int) -> TrainConfig:
    return cfg.train.model_copy(update={"seed": seed})


def run_baseline(
    cfg: SweepConfig, split: Split | None = None, data_dir: Path | None = None
) -> tuple[Network, SweepRow]:
    """Plain training at T=1 followed by FGSM evaluation; writes ``baseline.model``."""
    started = time.perf_counter()
    data = prepare_data(cfg, split, data_dir)
    train_cfg = _train_config(cfg, derive_seed(cfg.master_seed, BASELINE_STREAM))
    architecture = cfg.architecture(data.train.inputs.shape[1], data.train.num_classes)

    log = bind_run(logger, "baseline")
    with log_timing(log, "baseline training"):
        initial = init_network(architecture, 1.0, train_cfg.seed, train_cfg.init_scale)
        net = train_sgd(initial, data.train, train_cfg, log=log)

    row = evaluate(net, data.test, cfg)
    if cfg.record_wall_time:
        row.wall_time_seconds = time.perf_counter() - started

    save_model(net, cfg.output.parent / "baseline.model")
    log.info(
        f"baseline accuracy {row.clean_test_accuracy:.4f}, "
        f"FGSM success {row.fgsm_success_rate:.4f}"
    )
    return net, row


def distillation_config(
    cfg: SweepConfig,
    temperature: float,
    seed: int,
    input_width: int,
    num_classes: int,
) -> DistillationConfig:
    return DistillationConfig(
        temperature=temperature,
        architecture=cfg.architecture(input_width, num_classes),
        teacher_train=_train_config(cfg, derive_seed(seed, 0)),
        student_train=_train_config(cfg, derive_seed(seed, 1)),
        soft_label_temperature=cfg.soft_label_temperature,
    )


@dataclass
class TemperatureJob:
    index: int
    temperature: float
    cfg: SweepConfig
    data: Split


def run_temperature(job: TemperatureJob) -> tuple[SweepRow, Network | None]:
    """One sweep point; failures are recorded in the row instead of raised."""
    log = bind_run(logger, f"T={job.temperature:g}")
    started = time.perf_counter()
    seed = derive_seed(job.cfg.master_seed, TEMPERATURE_STREAM, job.index)

    try:
        distill_cfg = distillation_config(
            job.cfg,
            job.temperature,
            seed,
            job.data.train.inputs.shape[1],
            job.data.train.num_classes,
        )
        outcome = run_pipeline(job.data.train, distill_cfg, log=log)
        row = evaluate(outcome.deployed, job.data.test, job.cfg)
        row.temperature = job.temperature
        deployed = outcome.deployed
    except Exception as e:
        log.exception(f"sweep point T={job.temperature:g} failed")
        row = SweepRow(temperature=job.temperature, error=f"{type(e).__name__}: {e}")
        deployed = None

    if job.cfg.record_wall_time:
        row.wall_time_seconds = time.perf_counter() - started
    return row, deployed


def run_sweep(
    cfg: SweepConfig, split: Split | None = None, data_dir: Path | None = None
) -> list[SweepRow]:
    """Distill, deploy and attack at every temperature; rows come back in grid order.

    The CSV at ``cfg.output`` is rewritten after each completed temperature.
    """
    data = prepare_data(cfg, split, data_dir)
    jobs = [
        TemperatureJob(index=index, temperature=temperature, cfg=cfg, data=data)
        for index, temperature in enumerate(cfg.temperatures)
    ]

    rows: list[SweepRow] = []
    for row, deployed in ordered_map(run_temperature, jobs, cfg.workers):
        rows.append(row)
        if deployed is not None:
            save_model(deployed, cfg.output.parent / f"distilled_T{row.temperature:g}.model")
        write_outputs(rows, cfg.output)

    return rows


def _format(value: float | None) -> str:
    if value is None:
        return ""
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def _parse(value: str) -> float | None:
    return float(value) if value != "" else None


def _csv(rows: list[SweepRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for row in rows:
        writer.writerow(
            [
                _format(row.temperature),
                _format(row.clean_test_accuracy),
                _format(row.fgsm_success_rate),
                _format(row.saliency_success_rate),
                _format(row.wall_time_seconds),
            ]
        )
    return buffer.getvalue()


def _svg(rows: list[SweepRow]) -> str:
    """Success rate (percent) against temperature on a logarithmic axis."""
    with matplotlib.rc_context({"svg.hashsalt": "distill-defense", "svg.fonttype": "none"}):
        fig = Figure(figsize=(6.4, 4.0))
        ax = fig.subplots()
        measured = [row for row in rows if row.fgsm_success_rate is not None]
        (line,) = ax.plot(
            [row.temperature for row in measured],
            [100.0 * row.fgsm_success_rate for row in measured],
            marker="o",
            label="FGSM",
        )
        line.set_gid("fgsm_success_rate")

        saliency = [row for row in rows if row.saliency_success_rate is not None]
        if saliency:
            (saliency_line,) = ax.plot(
                [row.temperature for row in saliency],
                [100.0 * row.saliency_success_rate for row in saliency],
                marker="s",
                label="Jacobian saliency",
            )
            saliency_line.set_gid("saliency_success_rate")

        ax.set_xscale("log")
        ax.set_xlabel("Distillation temperature T")
        ax.set_ylabel("Adversarial sample success rate (%)")
        ax.set_ylim(0, 100)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()

        buffer = io.StringIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
    return buffer.getvalue()


def emit_report(rows: list[SweepRow], format: Literal["csv", "svg"] = "csv") -> str:
    if not rows:
        raise InvalidArgumentError("no rows to report")
    if format == "csv":
        return _csv(rows)
    if format == "svg":
        return _svg(rows)
    raise InvalidArgumentError(f"unknown report format {format!r}")


def parse_report(text: str) -> list[SweepRow]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CSV_FIELDS:
        raise InvalidArgumentError(f"unexpected CSV header {reader.fieldnames}")
    return [
        SweepRow(
            temperature=float(record["temperature"]),
            clean_test_accuracy=_parse(record["clean_accuracy"]),
            fgsm_success_rate=_parse(record["fgsm_success_rate"]),
            saliency_success_rate=_parse(record["saliency_success_rate"]),
            wall_time_seconds=float(record["wall_time_s"]),
        )
        for record in reader
    ]


def write_outputs(rows: list[SweepRow], output: Path) -> None:
    """Write the sweep CSV and its gradient-norm companion next to it."""
    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_text(emit_report(rows, "csv"))

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(MECHANISM_FIELDS)
    for row in rows:
        writer.writerow(
            [_format(row.temperature), _format(row.median_gradient_l1), row.error or ""]
        )
    output.with_name(f"{output.stem}_mechanism.csv").write_text(buffer.getvalue())
