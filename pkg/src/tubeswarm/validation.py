"""Small input-validation helpers used across the public API."""

import numbers

import numpy as np

from .errors import DomainError


def as_vector2(value, name="vector"):
    """Coerce to a float array of shape (2,)."""
    arr = np.asarray(value, dtype=float)
    if arr.shape != (2,):
        raise DomainError(f"{name} must have shape (2,), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {arr}")
    return arr


def check_scalar(value, name, low=None, high=None, require_finite=True):
    """Validate a real scalar, optionally against closed bounds."""
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise DomainError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if require_finite and not np.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value}")
    if low is not None and value < low:
        raise DomainError(f"{name} must be >= {low}, got {value}")
    if high is not None and value > high:
        raise DomainError(f"{name} must be <= {high}, got {value}")
    return value


def check_arc_length(l, total_length, name="l", slack=1e-9):
    """Validate l in [0, total_length] (tiny slack) and clamp exactly."""
    l = check_scalar(l, name)
    if l < -slack or l > total_length + slack:
        raise DomainError(
            f"{name}={l} outside the center curve domain [0, {total_length}]"
        )
    return min(max(l, 0.0), total_length)


def as_arc_lengths(l, total_length, name="l", slack=1e-9):
    """Vector form of :func:`check_arc_length`; always returns an array."""
    arr = np.atleast_1d(np.asarray(l, dtype=float))
    if arr.ndim != 1:
        raise DomainError(f"{name} must be scalar or 1-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    if np.any(arr < -slack) or np.any(arr > total_length + slack):
        raise DomainError(
            f"{name} has entries outside the center curve domain [0, {total_length}]"
        )
    return np.clip(arr, 0.0, total_length)
