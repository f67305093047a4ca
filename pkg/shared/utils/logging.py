"""structlog setup plus the run and epoch context carried by every log line.

Run-level fields (command, run directory, seed) are bound once per command and
the epoch is bound for the duration of each training epoch, both through
contextvars, so deep library code logs them without passing them around.
"""

import logging
import sys
from contextlib import contextmanager
from typing import Any, Iterator, Optional

import structlog
from config import settings
from shared.exceptions import ValidationError

RUN_CONTEXT_KEYS = ("command", "run_dir", "seed")


def setup_logging(level: Optional[str] = None, fmt: Optional[str] = None) -> None:
    """Setup structured logging with structlog"""

    level_name = (level or settings.logging.level).upper()
    log_format = fmt or settings.logging.format

    # Configure standard library logging
    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=getattr(logging, level_name),
    )

    # Configure structlog
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.dev.ConsoleRenderer() if log_format == "console"
            else structlog.processors.JSONRenderer(),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(getattr(logging, level_name)),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=True,
    )


def get_logger(name: Optional[str] = None) -> structlog.BoundLogger:
    """Structured logger whose lines carry the module as `component`"""
    if name is None:
        return structlog.get_logger()
    return structlog.get_logger(component=name.rsplit(".", 1)[-1])


def bind_run_context(**fields: Any) -> None:
    """Add run-level fields (see RUN_CONTEXT_KEYS) to later log lines; None values are skipped"""
    unknown = set(fields) - set(RUN_CONTEXT_KEYS)
    if unknown:
        raise ValidationError(f"unknown run context keys: {sorted(unknown)}")
    structlog.contextvars.bind_contextvars(**{k: v for k, v in fields.items() if v is not None})


def clear_run_context() -> None:
    structlog.contextvars.unbind_contextvars(*RUN_CONTEXT_KEYS)


@contextmanager
def epoch_context(epoch: int) -> Iterator[None]:
    """Tag every line logged inside the block with the training epoch"""
    with structlog.contextvars.bound_contextvars(epoch=epoch):
        yield
