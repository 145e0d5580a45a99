"""Logging utilities for cdcplan.

All records go through one Rich handler on stderr; stdout carries only the
JSON and CSV that commands emit.
"""

import logging

from rich.console import Console
from rich.logging import RichHandler

LOGGER_NAME = "cdcplan"


def setup_logging(
    verbose: bool = False, console: Console | None = None
) -> logging.Logger:
    """Configure and return the ``cdcplan`` logger.

    Library modules log through ``logging.getLogger(__name__)`` and so end up
    under this logger. Calling it again replaces the previous handler.

    Args:
        verbose (bool, optional): Log at DEBUG instead of INFO.
        console (Console | None, optional): Where records are rendered. A
            new stderr console is created when omitted.

    Returns:
        logging.Logger: The configured package logger.

    """
    if console is None:
        console = Console(stderr=True)

    handler = RichHandler(
        console=console,
        rich_tracebacks=True,
        markup=True,
        show_time=True,
        show_path=True,
        log_time_format="[%X]",
    )

    logger = logging.getLogger(LOGGER_NAME)
    logger.handlers.clear()
    logger.addHandler(handler)
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    logger.propagate = False
    return logger
