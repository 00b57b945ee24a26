"""
Structural Complexity Toolkit - Logging Utilities

Plain progress messages and structured pipeline events on one package logger.
Events render as one JSON object per line: {"timestamp", "event_type", "data"}.
Handlers write to stderr or a file; stdout is reserved for data artifacts.
"""

import json
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional, Union

LOGGER_NAME = "sc"
TEXT_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


def _to_plain(value: Any) -> Any:
    # numpy scalars and arrays
    if hasattr(value, "tolist"):
        return value.tolist()
    return str(value)


class EventFormatter(logging.Formatter):
    """
    Formats records carrying an `event` attribute as JSON lines and everything
    else with TEXT_FORMAT
    """

    def __init__(self):
        super().__init__(TEXT_FORMAT)

    def format(self, record: logging.LogRecord) -> str:
        event = getattr(record, "event", None)
        if event is None:
            return super().format(record)
        payload = {
            "timestamp": datetime.fromtimestamp(record.created).isoformat(),
            "event_type": event,
            "data": record.msg,
        }
        return json.dumps(payload, default=_to_plain)


class SCLogger:
    """
    Package logger: text messages plus typed events that can be switched off
    """

    def __init__(
        self,
        log_file: Optional[Union[str, Path]] = None,
        console: bool = True,
        log_level: int = logging.INFO,
        structured_enabled: bool = True
    ):
        """
        Args:
            log_file: Optional path to a log file (appended)
            console: Whether to log to stderr
            log_level: Minimum level
            structured_enabled: Whether events are emitted at all
        """
        self.logger = logging.getLogger(LOGGER_NAME)
        self.logger.setLevel(log_level)
        self.logger.propagate = False
        self.structured_enabled = structured_enabled

        for handler in list(self.logger.handlers):
            self.logger.removeHandler(handler)
            handler.close()

        handlers = []
        if log_file:
            path = Path(log_file)
            path.parent.mkdir(parents=True, exist_ok=True)
            handlers.append(logging.FileHandler(path, mode="a"))
        if console:
            handlers.append(logging.StreamHandler(sys.stderr))
        for handler in handlers:
            handler.setFormatter(EventFormatter())
            self.logger.addHandler(handler)
        if not handlers:
            self.logger.addHandler(logging.NullHandler())

    def message(self, level: int, msg: str):
        self.logger.log(level, msg)

    def event(self, level: int, event_type: str, data: Dict[str, Any]):
        """
        Emit a structured event

        Args:
            level: Log level
            event_type: Event name, e.g. "matrix_built" or "fold_scored"
            data: JSON-serializable payload
        """
        if self.structured_enabled and self.logger.isEnabledFor(level):
            # data travels as the record message; args stay empty so no %-formatting happens
            self.logger.log(level, data, extra={"event": event_type})


_default_logger: Optional[SCLogger] = None


def _parse_level(level: Union[int, str]) -> int:
    if isinstance(level, int):
        return level
    resolved = logging.getLevelName(str(level).upper())
    return resolved if isinstance(resolved, int) else logging.INFO


def setup_logging(
    log_file: Optional[Union[str, Path]] = None,
    console: bool = True,
    log_level: Union[int, str] = logging.INFO,
    structured_enabled: bool = True
) -> SCLogger:
    """
    Configure the package logger, replacing any earlier configuration

    Args:
        log_file: Optional path to a log file
        console: Whether to log to stderr
        log_level: Level number or name ("DEBUG", "INFO", ...); unknown names mean INFO
        structured_enabled: Whether to emit structured events

    Returns:
        SCLogger instance
    """
    global _default_logger
    _default_logger = SCLogger(
        log_file=log_file,
        console=console,
        log_level=_parse_level(log_level),
        structured_enabled=structured_enabled,
    )
    return _default_logger


def get_logger() -> SCLogger:
    """Package logger, configured from SC_* settings on first use"""
    if _default_logger is None:
        from src.utils.config import get_settings

        settings = get_settings()
        return setup_logging(
            log_file=settings.log_file,
            log_level=settings.log_level,
            structured_enabled=settings.structured_logs,
        )
    return _default_logger


def debug(msg: str):
    get_logger().message(logging.DEBUG, msg)


def info(msg: str):
    get_logger().message(logging.INFO, msg)


def debug_event(event_type: str, data: Dict[str, Any]):
    get_logger().event(logging.DEBUG, event_type, data)


def info_event(event_type: str, data: Dict[str, Any]):
    get_logger().event(logging.INFO, event_type, data)


def warning_event(event_type: str, data: Dict[str, Any]):
    get_logger().event(logging.WARNING, event_type, data)


def error_event(event_type: str, data: Dict[str, Any]):
    get_logger().event(logging.ERROR, event_type, data)
