# core/exceptions.py

"""
Custom exceptions and error handling for pose estimation, refinement and tracking.
"""

import logging
import traceback
from functools import wraps
from typing import Any, Callable, Optional, Type

logger = logging.getLogger(__name__)


class PoseMatchError(Exception):
    """Base class for all posematch exceptions."""
    def __init__(self, message: str, original_exception: Optional[Exception] = None):
        self.message = message
        self.original_exception = original_exception
        super().__init__(self.message)

    def __str__(self) -> str:
        if self.original_exception:
            return f"{self.message} (Caused by: {type(self.original_exception).__name__}: {self.original_exception})"
        return self.message


class ValidationError(PoseMatchError):
    """Raised when input validation fails."""
    pass


class ConfigurationError(PoseMatchError):
    """Raised when an experiment configuration is invalid."""
    pass


# Geometry

class ZeroNormQuaternion(PoseMatchError):
    """Raised when a quaternion is too close to zero to be normalized."""
    pass


class NonPositiveDepth(PoseMatchError):
    """Raised when a pose used for untangling lies at or behind the camera plane."""
    pass


# Rasters

class BBoxLargerThanImage(PoseMatchError):
    """Raised when an aspect-corrected box cannot fit inside the image."""
    pass


class BBoxOutOfBounds(PoseMatchError):
    """Raised when a crop box leaves the image it is cropping."""
    pass


class EmptyMask(PoseMatchError):
    """Raised when an operation needs at least one foreground pixel."""
    pass


# Rendering and meshes

class ObjectBehindCamera(PoseMatchError):
    """Raised when every vertex of a mesh lies at or behind the camera."""
    pass


class ParseError(PoseMatchError):
    """Raised when a mesh file is malformed."""
    def __init__(self, message: str, line: Optional[int] = None,
                 original_exception: Optional[Exception] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, original_exception)


class UnsupportedElement(ParseError):
    """Raised for mesh content outside the supported subset (e.g. faces with more than 4 vertices)."""
    pass


# Estimation

class MissingSceneHandle(PoseMatchError):
    """Raised when an oracle estimator is queried without access to the true pose."""
    pass


class NonDifferentiablePoint(PoseMatchError):
    """Raised (in strict mode) when a loss is evaluated at a kink of one of its absolute-value terms."""
    pass


# Evaluation

class EmptyInput(PoseMatchError):
    """Raised when an aggregate is requested over no samples."""
    pass


class ExperimentError(PoseMatchError):
    """Raised when a benchmark run fails."""
    pass


def handle_exceptions(error_type: Type[PoseMatchError], error_message: str = None):
    """
    Decorator for handling exceptions in IO-facing and orchestration functions.

    Args:
        error_type: The type of PoseMatchError to raise
        error_message: Optional custom error message

    Example:
        @handle_exceptions(ParseError, "Error reading mesh")
        def load_ply(path):
            # Parsing implementation...
    """
    def decorator(func: Callable) -> Callable:
        @wraps(func)
        def wrapper(*args, **kwargs) -> Any:
            try:
                return func(*args, **kwargs)
            except PoseMatchError:
                # Already meaningful, never wrap twice
                raise
            except Exception as e:
                func_name = func.__name__
                args_str = ", ".join([str(a) for a in args])
                kwargs_str = ", ".join([f"{k}={v}" for k, v in kwargs.items()])

                message = error_message or f"Error in {func_name}({args_str}{', ' if args_str and kwargs_str else ''}{kwargs_str})"

                logger.error(f"{message}: {e}")
                logger.debug(f"Stack trace: {traceback.format_exc()}")

                raise error_type(message, original_exception=e)
        return wrapper
    return decorator


def validate_input(validation_func: Callable, error_message: str = None):
    """
    Decorator for validating input parameters.

    Args:
        validation_func: Function that validates inputs and returns True/False
        error_message: Optional custom error message

    Example:
        @validate_input(lambda m, k: k >= 0, "Dilation size must be non-negative")
        def dilate_mask(m, k):
            # Implementation...
    """
    def decorator(func: Callable) -> Callable:
        @wraps(func)
        def wrapper(*args, **kwargs) -> Any:
            if not validation_func(*args, **kwargs):
                message = error_message or f"Validation failed for {func.__name__}"
                logger.error(message)
                raise ValidationError(message)
            return func(*args, **kwargs)
        return wrapper
    return decorator
