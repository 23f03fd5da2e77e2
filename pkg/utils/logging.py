import os
import sys
from typing import Any

from loguru import logger

CONSOLE_FORMAT = "{time:HH:mm:ss} - {level} - {message}"
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} - {extra[name]} - {level} - {message}"

logger.configure(extra={"name": "cares"})


def setup_logging(log_dir: str = "logs", level: str = "INFO", to_file: bool = True):
    """Configure console and daily file sinks."""
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format=CONSOLE_FORMAT)

    if to_file:
        # Create logs directory if it doesn't exist
        os.makedirs(log_dir, exist_ok=True)
        logger.add(
            os.path.join(log_dir, "cares_{time:YYYYMMDD}.log"),
            level="DEBUG",
            format=FILE_FORMAT,
            rotation="00:00",
            encoding="utf-8",
        )


def get_logger(name: str):
    """Get a logger bound to a module name."""
    return logger.bind(name=name)


def _format_details(details: dict) -> str:
    return ", ".join(f"{k}={_short(v)}" for k, v in details.items())


def _short(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


class RunLogger:
    """Logger for pipeline runs with structured detail helpers."""

    def __init__(self, name: str):
        self.logger = get_logger(name)

    def info(self, message: str, **kwargs):
        """Log info message."""
        self.logger.bind(**kwargs).info(message)

    def warning(self, message: str, **kwargs):
        """Log warning message."""
        self.logger.bind(**kwargs).warning(message)

    def error(self, message: str, error: Exception = None, **kwargs):
        """Log error message, with traceback when an exception is given."""
        if error:
            self.logger.bind(**kwargs).opt(exception=error).error(f"{message}: {error}")
        else:
            self.logger.bind(**kwargs).error(message)

    def debug(self, message: str, **kwargs):
        """Log debug message."""
        self.logger.bind(**kwargs).debug(message)

    def log_stage(self, stage: str, **details):
        """Log completion of a pipeline stage."""
        self.info(f"Stage - {stage} | {_format_details(details)}")

    def log_epoch(self, epoch: int, **details):
        """Log end-of-epoch metrics."""
        self.info(f"Epoch {epoch} | {_format_details(details)}")

    def log_artifact(self, kind: str, path: str, success: bool = True, **details):
        """Log an artifact read or write."""
        status = "SUCCESS" if success else "FAILED"
        suffix = f" | {_format_details(details)}" if details else ""
        self.info(f"Artifact - {kind} {path}: {status}{suffix}")
