"""Small input-validation helpers used by the estimators and free functions.

These mirror the checks scikit-learn's ``check_array`` performs, but raise
the package's own exception types so the CLI can map them to exit codes.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError


def as_float_1d(values, name: str = "values") -> np.ndarray:
    """Coerce to a 1-D float64 array, rejecting empty or non-finite input."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    if arr.size == 0:
        raise DataError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite entries")
    return arr


def as_float_2d(values, name: str = "values") -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting empty or non-finite input."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2:
        raise DataError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise DataError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite entries")
    return arr


def check_equal_length(a, b, name_a: str = "x", name_b: str = "y") -> None:
    if len(a) != len(b):
        raise DataError(
            f"{name_a} and {name_b} must have equal length: {len(a)} != {len(b)}"
        )


def check_fitted(estimator, attribute: str) -> None:
    """Raise if ``estimator`` lacks the given fitted attribute."""
    if getattr(estimator, attribute, None) is None:
        raise DataError(
            f"{type(estimator).__name__} is not fitted (missing {attribute})"
        )


def require(condition: bool, message: str) -> None:
    """Raise DataError with ``message`` unless ``condition`` holds."""
    if not condition:
        raise DataError(message)
