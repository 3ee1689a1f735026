import contextlib
import json
import logging
import logging.handlers
import os
import sys
import time
from pathlib import Path

ROOT_LOGGER_NAME = "distill_defense"


class RunIdFilter(logging.Filter):
    """Add run_id to log records if available."""

    def filter(self, record):
        if not hasattr(record, "run_id"):
            record.run_id = "-"
        return True


class JSONFormatter(logging.Formatter):
    """Format logs as JSON for machine parsing of long sweeps."""

    def format(self, record):
        log_record = {
            "timestamp": self.formatTime(record, self.datefmt),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "run_id": getattr(record, "run_id", "-"),
            "process": record.processName,
        }

        if hasattr(record, "duration"):
            log_record["duration_ms"] = record.duration

        if record.exc_info:
            log_record["exception"] = self.formatException(record.exc_info)

        return json.dumps(log_record)


TEXT_FORMAT = "%(asctime)s - %(levelname)s - [%(run_id)s] - %(name)s - %(message)s"
LOG_FILE_BYTES = 10 * 1024 * 1024
LOG_FILE_BACKUPS = 5


def _below_error(record):
    return record.levelno < logging.ERROR


def _configure(handler, level, formatter, *filters):
    handler.setLevel(level)
    handler.addFilter(RunIdFilter())
    for extra_filter in filters:
        handler.addFilter(extra_filter)
    handler.setFormatter(formatter)
    return handler


def _rotating(path):
    return logging.handlers.RotatingFileHandler(
        filename=path, maxBytes=LOG_FILE_BYTES, backupCount=LOG_FILE_BACKUPS
    )


def setup_logging(log_level=None, json_logs=False, log_dir=None):
    """Route records to stdout (below ERROR), stderr (ERROR and up) and rotating files.

    ``app.log`` gets everything at ``log_level``; ``error.log`` only errors.
    Calling it again replaces the previous handlers.
    """
    level_name = str(log_level or os.environ.get("LOG_LEVEL", "INFO")).upper()
    level = getattr(logging, level_name, logging.INFO)

    log_dir = Path(log_dir or os.environ.get("LOG_DIR", "logs"))
    log_dir.mkdir(parents=True, exist_ok=True)

    formatter = JSONFormatter() if json_logs else logging.Formatter(TEXT_FORMAT)

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)
        handler.close()

    for handler in (
        _configure(logging.StreamHandler(sys.stdout), level, formatter, _below_error),
        _configure(logging.StreamHandler(sys.stderr), logging.ERROR, formatter),
        _configure(_rotating(log_dir / "app.log"), level, formatter),
        _configure(_rotating(log_dir / "error.log"), logging.ERROR, formatter),
    ):
        root_logger.addHandler(handler)

    # font lookup chatter during SVG rendering
    logging.getLogger("matplotlib").setLevel(logging.WARNING)

    return logging.getLogger(ROOT_LOGGER_NAME)


def get_logger(name=None):
    """Get a logger with the given name."""
    if name is None:
        return logging.getLogger(ROOT_LOGGER_NAME)
    return logging.getLogger(f"{ROOT_LOGGER_NAME}.{name}")


def bind_run(logger, run_id):
    """Attach a run id (e.g. ``T=20``) to every record emitted through the logger."""
    return logging.LoggerAdapter(logger, {"run_id": run_id})


@contextlib.contextmanager
def log_timing(logger, name, extra=None):
    """Context manager to log execution time of a block of code."""
    if extra is None:
        extra = {}

    start_time = time.perf_counter()
    try:
        yield
    finally:
        duration = int((time.perf_counter() - start_time) * 1000)
        extra["duration"] = duration
        logger.info(f"{name} completed in {duration}ms", extra=extra)
