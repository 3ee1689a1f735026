from functools import lru_cache
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict
from utility.logging_config import setup_logging

MNIST_DATA_DIR_ENV = "MNIST_DATA_DIR"


class Settings(BaseSettings):
    mnist_data_dir: Path | None = Field(default=None, alias=MNIST_DATA_DIR_ENV)
    output_dir: Path = Path("runs")
    log_level: str = "INFO"
    json_logs: bool = False
    log_dir: Path = Path("logs")

    # 1 runs temperature points sequentially
    sweep_workers: int = Field(default=1, ge=1)

    model_config = SettingsConfigDict(
        env_file=".env", extra="allow", populate_by_name=True
    )


@lru_cache
def get_settings():
    settings = Settings()

    # Configure logging based on settings
    setup_logging(settings.log_level, settings.json_logs, settings.log_dir)

    return settings
