"""Shared exception types and input-checking helpers."""
from __future__ import annotations

import numpy as np


class FuzzyDuoError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(FuzzyDuoError, ValueError):
    """A numeric parameter violates its domain (e.g. non-positive width)."""


class DimensionError(FuzzyDuoError, ValueError):
    """Array shapes are inconsistent with each other or with the model."""


class InvalidInputError(FuzzyDuoError, ValueError):
    """An input value or container violates the operation's contract."""


class InvalidLabelError(FuzzyDuoError, ValueError):
    """A class label is outside the valid range."""


class DatasetFormatError(FuzzyDuoError, ValueError):
    """A dataset or config file on disk could not be parsed."""


class DegenerateVarianceError(FuzzyDuoError, ArithmeticError):
    """A statistic is undefined because the sample variance is zero."""


class DivergenceError(FuzzyDuoError, ArithmeticError):
    """Training produced a non-finite loss."""


def as_float_array(value, name: str) -> np.ndarray:
    """Convert to a float64 ndarray, rejecting non-finite entries."""
    arr = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def as_vector(value, name: str) -> np.ndarray:
    arr = as_float_array(value, name)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    return arr


def as_matrix(value, name: str) -> np.ndarray:
    arr = as_float_array(value, name)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    return arr


def require_finite_scalar(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value):
        raise InvalidParameterError(f"{name} must be finite, got {value}")
    return value


def require_positive_scalar(value: float, name: str) -> float:
    value = require_finite_scalar(value, name)
    if value <= 0.0:
        raise InvalidParameterError(f"{name} must be > 0, got {value}")
    return value
