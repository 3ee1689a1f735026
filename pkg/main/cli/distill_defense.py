import sys
from functools import wraps
from pathlib import Path

import typer
from pydantic import ValidationError

from settings import get_settings
from src.attacks import FgsmConfig, SaliencyConfig, success_rate
from src.distillation import run_pipeline
from src.engine import TrainConfig
from src.errors import DistillDefenseError
from src.harness import (
    TEMPERATURE_STREAM,
    SweepConfig,
    distillation_config,
    emit_report,
    evaluate,
    load_sweep_config,
    parse_report,
    prepare_data,
    run_baseline,
    run_sweep,
)
from src.model_io import load_model, save_model
from utility.logging_config import get_logger
from utility.runtime import derive_seed

app = typer.Typer(help="Defensive distillation training and adversarial evaluation.")
logger = get_logger("cli")


def one_line_errors(f):
    """Report failures as a single diagnostic line and a nonzero exit code."""

    @wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ValidationError as e:
            first = e.errors()[0]
            location = ".".join(str(part) for part in first["loc"])
            typer.echo(f"error: invalid configuration {location}: {first['msg']}", err=True)
        except (DistillDefenseError, OSError) as e:
            typer.echo(f"error: {e}", err=True)
        raise typer.Exit(code=1)

    return wrapper


def _sweep_config(config: Path | None, **overrides) -> SweepConfig:
    cfg = load_sweep_config(config) if config else SweepConfig()
    updates = {key: value for key, value in overrides.items() if value is not None}
    if "output" not in cfg.model_fields_set and "output" not in updates:
        updates["output"] = get_settings().output_dir / "sweep.csv"
    if "workers" not in cfg.model_fields_set and "workers" not in updates:
        updates["workers"] = get_settings().sweep_workers
    return SweepConfig.model_validate(cfg.model_dump() | updates)


def _data_dir(data_dir: Path | None) -> Path | None:
    return data_dir or get_settings().mnist_data_dir


@app.command()
@one_line_errors
def train(
    config: Path = typer.Option(None, help="TOML sweep document supplying defaults"),
    data_dir: Path = typer.Option(None, help="MNIST directory (default: MNIST_DATA_DIR)"),
    epochs: int = typer.Option(None),
    train_limit: int = typer.Option(None),
    test_limit: int = typer.Option(None),
    epsilon: float = typer.Option(None),
    seed: int = typer.Option(None, "--seed", help="master seed"),
    output: Path = typer.Option(None, help="CSV path; the model is written beside it"),
):
    """Train the baseline network (no distillation) and attack it with FGSM."""
    cfg = _sweep_config(
        config,
        train_limit=train_limit,
        test_limit=test_limit,
        epsilon=epsilon,
        master_seed=seed,
        output=output,
    )
    if epochs is not None:
        cfg.train = TrainConfig.model_validate(cfg.train.model_dump() | {"epochs": epochs})

    _, row = run_baseline(cfg, data_dir=_data_dir(data_dir))
    cfg.output.parent.mkdir(parents=True, exist_ok=True)
    cfg.output.write_text(emit_report([row], "csv"))
    typer.echo(emit_report([row], "csv"), nl=False)


@app.command()
@one_line_errors
def distill(
    temp: float = typer.Option(..., "--temp", help="distillation temperature T"),
    config: Path = typer.Option(None),
    data_dir: Path = typer.Option(None),
    seed: int = typer.Option(None, "--seed", help="master seed"),
    model_out: Path = typer.Option(None, help="where to write the deployed model"),
):
    """Run teacher -> soft labels -> distilled student at one temperature and deploy it."""
    cfg = _sweep_config(config, master_seed=seed, temperatures=[temp])
    data = prepare_data(cfg, data_dir=_data_dir(data_dir))
    distill_cfg = distillation_config(
        cfg,
        temp,
        derive_seed(cfg.master_seed, TEMPERATURE_STREAM, 0),
        data.train.inputs.shape[1],
        data.train.num_classes,
    )

    outcome = run_pipeline(data.train, distill_cfg)
    row = evaluate(outcome.deployed, data.test, cfg)
    row.temperature = temp

    save_model(outcome.deployed, model_out or cfg.output.parent / f"distilled_T{temp:g}.model")
    typer.echo(emit_report([row], "csv"), nl=False)


@app.command()
@one_line_errors
def attack(
    model: Path = typer.Option(..., help="model file to attack"),
    method: str = typer.Option("fgsm", help="fgsm | saliency"),
    epsilon: float = typer.Option(0.3, help="FGSM input variation"),
    theta: float = typer.Option(1.0, help="saliency per-feature perturbation"),
    gamma: float = typer.Option(0.145, help="saliency max fraction of modified features"),
    data_dir: Path = typer.Option(None),
    test_limit: int = typer.Option(2_000),
    seed: int = typer.Option(0, "--seed", help="master seed for the test subset"),
    only_initially_correct: bool = typer.Option(False),
    report: Path = typer.Option(None, help="per-sample CSV report path"),
):
    """Attack a saved model on the (seeded) test subset and print the success rate."""
    if method not in ("fgsm", "saliency"):
        raise typer.BadParameter(f"unknown method {method!r}", param_hint="--method")

    net = load_model(model)
    cfg = SweepConfig(test_limit=test_limit, master_seed=seed)
    test = prepare_data(cfg, data_dir=_data_dir(data_dir)).test

    attack_cfg = (
        FgsmConfig(epsilon=epsilon)
        if method == "fgsm"
        else SaliencyConfig(theta=theta, gamma=gamma)
    )
    result = success_rate(net, attack_cfg, test, only_initially_correct)

    if report is not None:
        report.parent.mkdir(parents=True, exist_ok=True)
        report.write_text(result.to_csv())
    typer.echo(f"{method} success rate: {result.success_rate:.4f}")


@app.command()
@one_line_errors
def sweep(
    config: Path = typer.Option(..., help="TOML sweep document"),
    data_dir: Path = typer.Option(None),
    workers: int = typer.Option(None, help="parallel temperature points"),
):
    """Distill at every configured temperature, then attack each deployed network."""
    cfg = _sweep_config(config, workers=workers)
    rows = run_sweep(cfg, data_dir=_data_dir(data_dir))

    failed = [row for row in rows if row.error]
    for row in failed:
        logger.error(f"T={row.temperature:g} failed: {row.error}")
    typer.echo(f"wrote {len(rows)} rows to {cfg.output}")
    if failed:
        raise typer.Exit(code=1)


@app.command()
@one_line_errors
def report(
    in_path: Path = typer.Option(..., "--in", help="sweep CSV"),
    format: str = typer.Option("csv", "--format", help="csv | svg"),
    out: Path = typer.Option(None, help="output file (default: stdout)"),
):
    """Re-emit a sweep CSV as CSV or as an SVG chart."""
    if format not in ("csv", "svg"):
        raise typer.BadParameter(f"unknown format {format!r}", param_hint="--format")

    rows = parse_report(in_path.read_text())
    document = emit_report(rows, format)
    if out is None:
        sys.stdout.write(document)
    else:
        out.write_text(document)


@app.callback()
def main():
    get_settings()


if __name__ == "__main__":
    app()
