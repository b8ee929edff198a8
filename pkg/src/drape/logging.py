from __future__ import annotations

import sys
from logging import DEBUG, Formatter, getLogger, Handler, Logger, LogRecord, NOTSET, StreamHandler
from logging.handlers import QueueHandler, QueueListener
from queue import SimpleQueue
from typing import Any, Optional, TYPE_CHECKING

if TYPE_CHECKING:
    from .simulation import Simulation  # noqa

default_handler = StreamHandler(sys.stderr)
default_handler.setFormatter(
    Formatter("[%(asctime)s] %(levelname)s %(name)s in %(module)s: %(message)s")
)

_queue_handler: Optional[QueueHandler] = None


class LocalQueueHandler(QueueHandler):
    """Queue handler for a queue read in the same process.

    Records are passed through unformatted, the listener thread does
    the formatting off the stepping loop.
    """

    def prepare(self, record: LogRecord) -> LogRecord:
        return record


def _shared_queue_handler(*handlers: Handler) -> QueueHandler:
    """Return the process wide queue handler, starting its listener once.

    Every simulation of a parameter fit creates a logger, they all feed
    the same listener thread.
    """
    global _queue_handler
    if _queue_handler is None:
        queue: SimpleQueue = SimpleQueue()
        QueueListener(queue, *handlers, respect_handler_level=True).start()
        _queue_handler = LocalQueueHandler(queue)
    return _queue_handler


def has_level_handler(logger: Logger) -> bool:
    """Whether a record at the logger's effective level reaches a handler."""
    level = logger.getEffectiveLevel()
    node: Optional[Logger] = logger
    while node is not None:
        if any(handler.level <= level for handler in node.handlers):
            return True
        node = node.parent if node.propagate else None
    return False


def create_logger(simulation: "Simulation") -> Logger:
    """Create the logger named after the simulation.

    The default simulation name is ``drape``, so this logger is the
    parent of the ``drape.*`` library loggers and stepper and solver
    diagnostics share its handler and level. Debug mode lowers the
    level to DEBUG unless a level was set explicitly.
    """
    logger = getLogger(simulation.name)
    if simulation.debug and logger.level == NOTSET:
        logger.setLevel(DEBUG)
    if not has_level_handler(logger):
        logger.addHandler(_shared_queue_handler(default_handler))
    return logger


def format_fields(**fields: Any) -> str:
    """Render diagnostics as ``key=value`` pairs in keyword order."""
    parts = []
    for key, value in fields.items():
        if isinstance(value, float):
            value = f"{value:.6g}"
        parts.append(f"{key}={value}")
    return " ".join(parts)
