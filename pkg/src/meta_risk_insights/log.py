"""Copyright (c) 2023, Aydin Abdi.

This module is responsible for logging. Only the command line selects sinks;
library modules log through ``loguru.logger`` and stay silent until then.
"""

import functools
import sys
import time
from typing import Any, Callable

from loguru import logger

LOG_FILE = "outputs/meta_risk_insights.log"
LOG_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan> - <level>{message}</level>"
)


def _configure(console_level: str) -> None:
    """Replace every sink by stderr at ``console_level`` and the DEBUG log file."""
    logger.remove()
    logger.add(sys.stderr, level=console_level, format=LOG_FORMAT)
    logger.add(LOG_FILE, level="DEBUG", format=LOG_FORMAT, rotation="1 day")


def verbose_logging() -> None:
    """loguru verbose: root brackets, iteration counts and per-point risks."""
    _configure("DEBUG")


def default_logging() -> None:
    """loguru default: run milestones and warnings."""
    _configure("INFO")


def log_execution_time(method: Callable[..., Any]) -> Callable[..., Any]:
    """
    Decorator to log the wall time of an estimator run or a risk kernel.

    Args:
        method: The function to be decorated.

    Returns:
        The decorated function.
    """

    @functools.wraps(method)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        start = time.perf_counter()
        try:
            return method(*args, **kwargs)
        finally:
            duration = time.perf_counter() - start
            logger.info(f"{method.__qualname__} executed in {duration:.2f} seconds.")

    return wrapper
