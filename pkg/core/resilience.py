"""
Error hierarchy and failure handling utilities for riskgrid
"""

import time
from functools import wraps
from typing import Any, Callable, Optional

from core.logging import logger


class RiskgridError(Exception):
    """Base exception for riskgrid"""
    pass


class ValidationFailure(RiskgridError):
    """Input rejected before any numerical work (CLI exit code 2)"""
    pass


class NumericalFailure(RiskgridError):
    """A numerical procedure broke down (CLI exit code 3)"""
    pass


class InvalidSpec(ValidationFailure):
    """Risk mapping or experiment parameter out of range"""
    def __init__(self, field: str, value: Any, reason: str):
        super().__init__(f"Invalid {field}={value!r}: {reason}")
        self.field = field
        self.value = value
        self.reason = reason


class DimensionMismatch(ValidationFailure):
    """Vector sizes do not agree"""
    def __init__(self, what: str, expected: int, actual: int):
        super().__init__(f"{what}: expected dimension {expected}, got {actual}")
        self.what = what
        self.expected = expected
        self.actual = actual


class EnumerationCapExceeded(ValidationFailure):
    """Exact mini-batch evaluation would enumerate too many tuples"""
    def __init__(self, support_size: int, batch_size: int, cap: int):
        super().__init__(
            f"Exact mini-batch evaluation needs {support_size}^{batch_size} tuples, cap is {cap}"
        )
        self.support_size = support_size
        self.batch_size = batch_size
        self.cap = cap


class UnsupportedBase(ValidationFailure):
    """Operation is not implemented for this base risk mapping"""
    def __init__(self, base: str, operation: str):
        super().__init__(f"{operation} is not available for base '{base}'")
        self.base = base
        self.operation = operation


class InfeasibleAction(ValidationFailure):
    """Action is not in the feasible set of the state"""
    def __init__(self, state: Any, action: Any):
        super().__init__(f"Action {action!r} is infeasible at state {state!r}")
        self.state = state
        self.action = action


class InvalidInstance(ValidationFailure):
    """Model or instance file violates a structural invariant"""
    pass


class DistanceUnavailable(ValidationFailure):
    """A required shortest-path distance is infinite"""
    def __init__(self, source: Any, target: Any):
        super().__init__(f"No path between {source} and {target}")
        self.source = source
        self.target = target


class NoTargetReachable(ValidationFailure):
    """The policy has no reachable target from the robot position"""
    def __init__(self, robot: Any):
        super().__init__(f"No reachable target from cell {robot}")
        self.robot = robot


class StateSpaceTooLarge(ValidationFailure):
    """Instance is too large for exact enumeration"""
    def __init__(self, estimate: int, cap: int):
        super().__init__(f"Estimated {estimate} states exceeds the exact cap {cap}")
        self.estimate = estimate
        self.cap = cap


class NoContraction(NumericalFailure):
    """Fixed-point iteration stopped contracting"""
    def __init__(self, iterations: int, residual: float):
        super().__init__(f"No contraction after {iterations} iterations (residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class NumericalBreakdown(NumericalFailure):
    """A rank-one update or factorisation became singular"""
    pass


class NotUnichain(NumericalFailure):
    """Markov chain has more than one recurrent class"""
    def __init__(self, recurrent_classes: int):
        super().__init__(f"Chain has {recurrent_classes} recurrent classes, expected 1")
        self.recurrent_classes = recurrent_classes


def exit_code_for(error: BaseException) -> int:
    """Map an exception onto the CLI exit code contract"""
    from pydantic import ValidationError

    if isinstance(error, (ValidationFailure, ValidationError)):
        return 2
    if isinstance(error, NumericalFailure):
        return 3
    return 1


def log_performance(func: Callable) -> Callable:
    """Decorator to log function performance"""
    @wraps(func)
    def wrapper(*args, **kwargs):
        start_time = time.perf_counter()
        try:
            result = func(*args, **kwargs)
            logger.info(f"{func.__name__} completed in {time.perf_counter() - start_time:.3f}s")
            return result
        except Exception as e:
            logger.error(f"{func.__name__} failed after {time.perf_counter() - start_time:.3f}s: {e}")
            raise
    return wrapper


def require(condition: bool, field: str, value: Any, reason: str) -> None:
    """Raise InvalidSpec unless condition holds"""
    if not condition:
        raise InvalidSpec(field, value, reason)


def surface_io_error(path: Any, error: OSError, action: Optional[str] = "write") -> OSError:
    """Re-wrap an IO error so the message names the path"""
    return type(error)(error.errno, f"Failed to {action} {path}: {error.strerror}")
