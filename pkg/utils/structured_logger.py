"""
Structured logging utilities for the approximation toolkit.
Provides contextual JSON logging with run IDs, timings and error types.
"""

import logging
import os
import time
from typing import Dict, Any, Optional, Union
from datetime import datetime, timezone

import orjson

from utils.exceptions import MqraError

CORE_KEYS = {"run_id", "command", "operation", "error_type"}
RENAMED_KEYS = {"level": "eigen_level", "timestamp": "context_timestamp", "message": "context_message",
                "service": "context_service"}


class StructuredLogger:
    """Structured logger with contextual information."""

    def __init__(self, name: str, level: str = "INFO"):
        self.logger = logging.getLogger(name)
        self.logger.setLevel(getattr(logging, level.upper()))
        self.logger.propagate = False

        # Remove existing handlers to avoid duplicates
        for handler in self.logger.handlers[:]:
            self.logger.removeHandler(handler)

        handler = logging.StreamHandler()
        handler.setLevel(getattr(logging, level.upper()))
        handler.setFormatter(JSONFormatter())

        self.logger.addHandler(handler)

    def _entry(self, level_name: str, message: str, **context) -> Dict[str, Any]:
        entry: Dict[str, Any] = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": level_name,
            "message": message,
            "service": "mqra"
        }
        duration_ms = context.pop("duration_ms", None)
        if duration_ms is not None:
            entry["duration_ms"] = round(duration_ms, 2)
        for key, value in context.items():
            if value is None and key in CORE_KEYS:
                continue
            # "level" is the log level; eigenvalue indices go under "eigen_level"
            entry[RENAMED_KEYS.get(key, key)] = value
        return entry

    def _log(self, log_level: int, message: str, **context) -> None:
        if not self.logger.isEnabledFor(log_level):
            return
        entry = self._entry(logging.getLevelName(log_level), message, **context)
        self.logger.log(log_level, orjson.dumps(entry, default=str, option=orjson.OPT_SERIALIZE_NUMPY).decode())

    def debug(self, message: str, **context):
        """Per-iteration detail."""
        self._log(logging.DEBUG, message, **context)

    def info(self, message: str, **context):
        self._log(logging.INFO, message, **context)

    def warning(self, message: str, **context):
        """Non-fatal numeric trouble: ill-conditioning, budget overruns, skipped files."""
        self._log(logging.WARNING, message, **context)

    def error(self, message: str, exception: Optional[Exception] = None, **context):
        """
        Log an error, attaching the exception type and, for toolkit errors,
        the error code and details.
        """
        if exception is not None:
            context["exception"] = {"type": type(exception).__name__, "message": str(exception)}
            if isinstance(exception, MqraError):
                context["error_code"] = exception.error_code
                context["error_details"] = exception.details
        self._log(logging.ERROR, message, **context)

    def performance(self, message: str, duration_ms: float, **context):
        """Timing of a completed step."""
        self._log(logging.INFO, message, duration_ms=duration_ms, metric_type="performance", **context)

    def numeric_metric(self, metric_name: str, value: Union[int, float], **context):
        """Residuals, condition numbers and errors, filterable by metric_name."""
        self._log(logging.INFO, f"Numeric metric: {metric_name}", metric_type="numeric",
                  metric_name=metric_name, metric_value=value, **context)


class JSONFormatter(logging.Formatter):
    """Pass-through formatter: messages are already JSON documents."""

    def format(self, record):
        """Format log record as JSON."""
        if hasattr(record, 'getMessage'):
            return record.getMessage()
        return super().format(record)


class RunContext:
    """Context manager for run-scoped logging of one command invocation."""

    def __init__(self, run_id: str, command: str, logger: StructuredLogger):
        self.run_id = run_id
        self.command = command
        self.logger = logger
        self.start_time = time.time()

    def __enter__(self):
        self.logger.info(
            "Run started",
            run_id=self.run_id,
            command=self.command,
            operation="run_start"
        )
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        duration_ms = (time.time() - self.start_time) * 1000

        if exc_type:
            self.logger.error(
                f"Run failed: {exc_val}",
                run_id=self.run_id,
                command=self.command,
                operation="run_end",
                error_type=exc_type.__name__,
                exception=exc_val,
                duration_ms=duration_ms
            )
        else:
            self.logger.info(
                "Run completed successfully",
                run_id=self.run_id,
                command=self.command,
                operation="run_end",
                duration_ms=duration_ms
            )

    def log_operation(self, operation: str, message: str, **kwargs):
        """Log operation within run context."""
        self.logger.info(
            message,
            run_id=self.run_id,
            command=self.command,
            operation=operation,
            **kwargs
        )

    def log_error(self, operation: str, message: str, exception: Optional[Exception] = None, **kwargs):
        """Log error within run context."""
        self.logger.error(
            message,
            run_id=self.run_id,
            command=self.command,
            operation=operation,
            exception=exception,
            **kwargs
        )


class Stopwatch:
    """Times a block and reports it through a structured logger."""

    def __init__(self, logger: StructuredLogger, operation: str, **context):
        self.logger = logger
        self.operation = operation
        self.context = context
        self.duration_ms = 0.0

    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.duration_ms = (time.perf_counter() - self._start) * 1000
        if exc_type is None:
            self.logger.performance(
                f"{self.operation} finished",
                duration_ms=self.duration_ms,
                operation=self.operation,
                **self.context
            )


def get_logger(name: str, level: Optional[str] = None) -> StructuredLogger:
    """
    Get a structured logger instance.

    Args:
        name: Logger name
        level: Log level (defaults to LOG_LEVEL env var or INFO)

    Returns:
        StructuredLogger instance
    """
    log_level = level or os.getenv('LOG_LEVEL', 'INFO')
    return StructuredLogger(name, log_level)


def create_run_context(run_id: str, command: str) -> RunContext:
    """
    Create a run context for scoped logging.

    Args:
        run_id: Identifier of the command invocation
        command: Name of the CLI subcommand

    Returns:
        RunContext instance
    """
    logger = get_logger(f"commands.{command}")
    return RunContext(run_id, command, logger)
