"""Input validation helpers used by the estimators and scoring functions."""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, NonFiniteValue, TooFewSamples


def check_matrix(X, name: str = "X", min_rows: int = 1) -> np.ndarray:
    """Coerce to a finite 2-D float64 array with at least `min_rows` rows."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got ndim={X.ndim}")
    if X.shape[0] < min_rows:
        raise TooFewSamples(
            f"{name} has {X.shape[0]} rows, need at least {min_rows}"
        )
    if not np.all(np.isfinite(X)):
        raise NonFiniteValue(f"{name} contains NaN or Inf")
    return X


def check_vector(x, dim: int | None = None, name: str = "x") -> np.ndarray:
    """Coerce to a finite 1-D float64 array, optionally of fixed length."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got ndim={x.ndim}")
    if dim is not None and x.shape[0] != dim:
        raise DimensionMismatch(
            f"{name} has length {x.shape[0]}, expected {dim}"
        )
    if not np.all(np.isfinite(x)):
        raise NonFiniteValue(f"{name} contains NaN or Inf")
    return x


def check_fitted(estimator, attribute: str) -> None:
    """Raise if `estimator` lacks the given fitted attribute."""
    if getattr(estimator, attribute, None) is None:
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted; call fit() first"
        )
