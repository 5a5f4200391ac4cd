import logging
import os
from collections.abc import Callable, Generator
from contextlib import contextmanager
from functools import wraps
from pathlib import Path
from typing import Any

import numpy as np

from conformalkit.core.errors import ConformalKitError

LOG_LEVEL_ENV_VAR = "CONFORMAL_KIT_LOG"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

logger = logging.getLogger("conformalkit")


def configure_logging(level: str = "WARNING", log_file: Path | None = None) -> None:
    """Configure the package logger once per process.

    The ``CONFORMAL_KIT_LOG`` environment variable, when set, takes precedence
    over the ``level`` argument.

    Args:
        level (str, optional): A logging level name. Defaults to "WARNING".
        log_file (Path, optional): Also append records to this file.
            Defaults to None.

    Raises:
        ValueError: If the resolved level name is unknown.
    """
    name = os.environ.get(LOG_LEVEL_ENV_VAR, level).strip().upper()
    resolved = logging.getLevelNamesMapping().get(name)
    if resolved is None:
        msg = f"Unknown log level: {name}"
        raise ValueError(msg)
    logger.setLevel(resolved)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    handlers: list[logging.Handler] = [logging.StreamHandler()]
    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))
    for handler in handlers:
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(handler)


def summarize(value: Any) -> str:  # noqa: ANN401
    """Render an argument for logging; arrays are reduced to shape and dtype.

    Examples:
        >>> summarize(np.zeros((3, 2)))
        'ndarray(shape=(3, 2), dtype=float64)'
        >>> summarize(0.1)
        '0.1'
    """
    if isinstance(value, np.ndarray):
        return f"ndarray(shape={value.shape}, dtype={value.dtype})"
    if isinstance(value, list | tuple) and len(value) > 8:  # noqa: PLR2004
        return f"{type(value).__name__}(len={len(value)})"
    return repr(value)


@contextmanager
def log_context(name: str) -> Generator[None, None, None]:
    """Log entry to and exit from a named block.

    conformalkit errors are expected outcomes (bad input, missing files) and
    are logged at debug level with their traceback; anything else is logged
    as an error. The exception always propagates.

    Args:
        name (str): Label of the block in log records.

    Yields:
        None: Control returns to the wrapped block.
    """
    logger.debug("Entering %s", name)
    try:
        yield
    except ConformalKitError:
        logger.debug("Error in %s", name, exc_info=True)
        raise
    except Exception:
        logger.exception("Exception in %s", name)
        raise
    finally:
        logger.debug("Exiting %s", name)


def log_operation[**P, R](func: Callable[P, R]) -> Callable[P, R]:
    """Decorator for logging function calls and their summarized arguments.

    Args:
        func (Callable[P, R]): The function to be decorated.

    Returns:
        Callable[P, R]: The wrapped function with logging.
    """

    @wraps(func)
    def wrapper(*args: P.args, **kwargs: P.kwargs) -> R:
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug(
                "Calling %s with args: %s and kwargs: %s",
                func.__name__,
                [summarize(arg) for arg in args],
                {key: summarize(value) for key, value in kwargs.items()},
            )
        with log_context(func.__name__):
            result = func(*args, **kwargs)
        logger.debug("%s returned %s", func.__name__, summarize(result))
        return result

    return wrapper
