"""Observability utilities - logging, sanitization and stage timing.

Provides:
- Console logging shared by the CLI logger and the package loggers
- Escaping of user-supplied values (paths, context masks) before they are logged
- JSON event records and a timing context manager for pipeline stages
"""

import json
import logging
import os
import re
import time
from contextlib import contextmanager
from typing import Any, Iterator


# Configuration
LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO")
LOGGER_NAME = "polycube-hexgen"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
PACKAGE_LOGGERS = ("geometry", "dataset", "frames", "diffusion", "denoiser", "polycube", "hexmesh")

_ESCAPES = {"\r": "\\r", "\n": "\\n", "\t": "\\t"}
_CONTROL = re.compile(r"[\x00-\x08\x0b\x0c\x0e-\x1f\x7f]")

# Global state
_logger = None


def sanitize_log_value(value: Any, max_length: int = 1000) -> str:
    """Render a value as a single safe log token.

    Line breaks and tabs are escaped, other control characters dropped and
    long values cut at ``max_length`` with a ``...[truncated]`` marker. A file
    name with an embedded newline therefore cannot forge a second log line.
    """
    if value is None:
        return "null"

    text = str(value).translate(str.maketrans(_ESCAPES))
    text = _CONTROL.sub("", text)
    if len(text) > max_length:
        text = text[:max_length] + "...[truncated]"
    return text


def setup_logging() -> logging.Logger:
    """Attach one console handler to the CLI logger and every package logger."""
    global _logger

    if _logger is not None:
        return _logger

    level = getattr(logging, LOG_LEVEL.upper(), logging.INFO)
    _logger = logging.getLogger(LOGGER_NAME)
    _logger.setLevel(level)
    if _logger.handlers:
        return _logger

    handler = logging.StreamHandler()
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))

    for name in (LOGGER_NAME, *PACKAGE_LOGGERS):
        package_logger = logging.getLogger(name)
        package_logger.setLevel(level)
        if not package_logger.handlers:
            package_logger.addHandler(handler)

    return _logger


def get_logger() -> logging.Logger:
    """Get or create the global logger."""
    global _logger
    if _logger is None:
        _logger = setup_logging()
    return _logger


def log_event(event: str, **fields: Any) -> None:
    """Log a single-line JSON event record."""
    get_logger().info(json.dumps({"event": event, **fields}, default=str))


@contextmanager
def timed(stage: str) -> Iterator[dict]:
    """Time a block and log its duration.

    Yields a dict that receives ``seconds`` once the block exits, so callers
    can copy the timing into their own records.
    """
    record: dict = {"stage": stage}
    start = time.perf_counter()
    log_event("stage_start", stage=stage)
    try:
        yield record
    finally:
        record["seconds"] = time.perf_counter() - start
        log_event("stage_end", stage=stage, seconds=round(record["seconds"], 4))


# ============================================
# Runtime
# ============================================

THREAD_ENV_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def pin_thread_pools() -> None:
    """Single-threaded BLAS/OpenMP. Only effective before numpy is first imported."""
    for name in THREAD_ENV_VARS:
        os.environ[name] = "1"
