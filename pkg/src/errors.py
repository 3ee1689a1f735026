from pathlib import Path


class DistillDefenseError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(DistillDefenseError, ValueError):
    """An operation was called with arguments outside its contract."""


class IdxFormatError(DistillDefenseError, ValueError):
    """An IDX file is malformed; ``field`` names the offending part."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"invalid IDX {field}: {message}")


class DataFileMissingError(DistillDefenseError, FileNotFoundError):
    def __init__(self, path: Path):
        self.path = Path(path)
        super().__init__(f"data file not found: {self.path}")


class ModelFormatError(DistillDefenseError, ValueError):
    """A model file could not be decoded."""
