"""
Logging and timing for DID Link.
Structured logs via structlog; durations via a monotonic clock.
"""

import logging
import sys
import time
from contextlib import contextmanager
from typing import Iterator, Optional

import structlog

_configured = False


def configure_logging(level: str = "INFO", fmt: str = "json") -> None:
    """Configure structlog and the stdlib root logger once per process."""
    global _configured
    numeric_level = getattr(logging, level.upper(), logging.INFO)
    logging.basicConfig(format="%(message)s", stream=sys.stderr, level=numeric_level, force=True)

    renderer = (
        structlog.dev.ConsoleRenderer(colors=False)
        if fmt == "console"
        else structlog.processors.JSONRenderer()
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            renderer,
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )
    _configured = True


def get_logger(name: Optional[str] = None):
    if not _configured:
        configure_logging()
    return structlog.get_logger(name)


class Stopwatch:
    """Monotonic stopwatch reporting milliseconds."""

    def __init__(self, started: bool = True):
        self._start: Optional[float] = time.perf_counter() if started else None
        self._stop: Optional[float] = None

    def start(self) -> "Stopwatch":
        self._start = time.perf_counter()
        self._stop = None
        return self

    def stop(self) -> float:
        self._stop = time.perf_counter()
        return self.elapsed_ms

    @property
    def started(self) -> bool:
        return self._start is not None

    @property
    def elapsed_ms(self) -> float:
        if self._start is None:
            return 0.0
        end = self._stop if self._stop is not None else time.perf_counter()
        return (end - self._start) * 1000.0


@contextmanager
def timed(logger, event: str, **fields) -> Iterator[Stopwatch]:
    """Log `event` with its duration in ms when the block exits."""
    watch = Stopwatch()
    try:
        yield watch
    finally:
        logger.debug(event, duration_ms=round(watch.stop(), 3), **fields)
