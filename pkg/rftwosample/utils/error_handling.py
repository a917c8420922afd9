"""Exception hierarchy of the toolkit and the decorators that guard its entry points."""

import functools
import logging
from typing import Any, Callable, Optional, Sequence, Type, TypeVar

R = TypeVar('R')

logger = logging.getLogger(__name__)

# Custom exceptions
class TwoSampleError(Exception):
    """Base class for every error raised by the toolkit."""
    pass

class InvalidArgumentError(TwoSampleError, ValueError):
    """An argument is outside its documented domain."""
    pass

class DecompositionError(TwoSampleError):
    """Cholesky factorization hit a non-positive pivot."""

    def __init__(self, message: str, pivot: int):
        super().__init__(message)
        self.pivot = pivot

class ScenarioConstructionError(TwoSampleError):
    """A scenario could not be built from its parameters."""
    pass

class DegenerateOOBError(TwoSampleError):
    """Every observation was in-bag for every tree; no OOB vote exists."""
    pass

class DegenerateNullError(TwoSampleError):
    """The estimated null distribution has zero spread."""

    def __init__(self, message: str, values: Sequence[float]):
        super().__init__(message)
        self.values = list(values)

class DegenerateSplitError(TwoSampleError):
    """A random split or partition left a training subset with a single label."""
    pass

class ZeroBandwidthError(TwoSampleError):
    """The median heuristic produced a zero kernel bandwidth."""
    pass

class InputFormatError(TwoSampleError):
    """A user-supplied data file could not be parsed."""

    def __init__(self, message: str, path: str = "", line: Optional[int] = None, column: Optional[int] = None):
        location = path
        if line is not None:
            location += f":{line}"
        if column is not None:
            location += f":{column}"
        super().__init__(f"{location}: {message}" if location else message)
        self.path = path
        self.line = line
        self.column = column

class ResultVersionError(TwoSampleError):
    """A persisted result was written with an incompatible schema version."""
    pass

class ResultIOError(TwoSampleError):
    """Reading or writing a result file failed."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def handle_errors(
    error_message: str = "Operation failed",
    exception_to_raise: Type[Exception] = TwoSampleError,
    log_traceback: bool = True,
    return_value: Optional[Any] = None,
    reraise: bool = True
) -> Callable:
    """
    Wrap a boundary function so that foreign exceptions surface as one domain type.

    Toolkit exceptions (and ``exception_to_raise`` itself) are re-raised as they
    are; anything else is logged under ``error_message`` and re-raised as
    ``exception_to_raise`` chained to the original.

    Args:
        error_message: Prefix of the logged and re-raised message
        exception_to_raise: Domain exception that replaces a foreign one
        log_traceback: Log the traceback of foreign exceptions
        return_value: Result when ``reraise`` is False
        reraise: Raise (True) or swallow and return ``return_value`` (False)
    """
    def decorator(func: Callable[..., R]) -> Callable[..., R]:
        @functools.wraps(func)
        def guarded(*args, **kwargs) -> R:
            try:
                return func(*args, **kwargs)
            except (TwoSampleError, exception_to_raise) as e:
                logger.debug(f"{error_message} in {func.__name__}: {e}")
                if reraise:
                    raise
                return return_value
            except Exception as e:
                message = f"{error_message}: {e}"
                logger.error(message, exc_info=log_traceback)
                if reraise:
                    raise exception_to_raise(message) from e
                return return_value

        return guarded
    return decorator


def handle_study_errors(error_message: str = "Study failed") -> Callable:
    """Guard for study entry points: unexpected failures become ``TwoSampleError``."""
    return handle_errors(error_message, exception_to_raise=TwoSampleError, log_traceback=True)


def handle_io_errors(error_message: str = "Result I/O failed") -> Callable:
    """Guard for result persistence: unexpected failures become ``ResultIOError``."""
    return handle_errors(error_message, exception_to_raise=ResultIOError, log_traceback=False)
