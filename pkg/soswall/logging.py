"""Logging for soswall.

One package logger, configured once at import from ``SOSWALL_LOG_LEVEL`` and again by the
cli when ``--log-level`` or ``--log-file`` is given. Cells log through a ``CellLogAdapter``
so every line names the (L, beta, seed) chain it came from, which keeps interleaved Ray
worker output readable.
"""

import logging
import os
from pathlib import Path
from typing import Any, List, MutableMapping, Optional, Tuple, Union

DEFAULT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# numba logs every compilation pass at DEBUG
_NOISY_LOGGERS = ("numba", "matplotlib", "ray")


def _level_from_env(default: int = logging.INFO) -> int:
    """Resolve SOSWALL_LOG_LEVEL, given as a name such as DEBUG or as a number."""
    raw = os.environ.get("SOSWALL_LOG_LEVEL")
    if not raw:
        return default
    if raw.isdigit():
        return int(raw)
    level = logging.getLevelName(raw.upper())
    return level if isinstance(level, int) else default


def _logger_setup(
    log_level: Optional[int] = None,
    log_file: Optional[Union[str, Path]] = None,
    log_format: Optional[str] = None,
    logger_name: str = "soswall",
) -> logging.Logger:
    """
    Configures the soswall logger, replacing whatever an earlier call installed.

    Args:
        log_level: Logging level. Defaults to SOSWALL_LOG_LEVEL, then INFO.
        log_file: Also write to this file, typically inside a run's output directory.
        log_format: Format string for log messages.
        logger_name: Name of the logger to configure.

    Returns:
        logging.Logger: Configured logger instance.

    Raises:
        IOError: If the log file cannot be created.
    """
    level = _level_from_env() if log_level is None else log_level
    formatter = logging.Formatter(log_format or DEFAULT_FORMAT)

    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file:
        log_path = Path(log_file)
        try:
            log_path.parent.mkdir(parents=True, exist_ok=True)
            handlers.append(logging.FileHandler(log_path))
        except IOError as e:
            raise IOError(f"Failed to create log file at {log_file}: {e}")

    logger = logging.getLogger(logger_name)
    logger.setLevel(level)
    logger.propagate = False
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)
    for handler in handlers:
        handler.setFormatter(formatter)
        logger.addHandler(handler)

    # Third-party chatter stays at WARNING unless soswall itself is below it
    for name in _NOISY_LOGGERS:
        logging.getLogger(name).setLevel(max(level, logging.WARNING))
    return logger


class CellLogAdapter(logging.LoggerAdapter):
    """Prefixes messages with the chain a cell runs, e.g. ``[L=64 beta=1.25 seed=3]``."""

    def process(self, msg: Any, kwargs: MutableMapping[str, Any]) -> Tuple[Any, MutableMapping[str, Any]]:
        extra = self.extra or {}
        return f"[L={extra['side_length']} beta={extra['beta']:g} seed={extra['seed']}] {msg}", kwargs


def cell_logger(side_length: int, beta: float, seed: int) -> CellLogAdapter:
    return CellLogAdapter(logger, {"side_length": side_length, "beta": beta, "seed": seed})


logger = _logger_setup()
