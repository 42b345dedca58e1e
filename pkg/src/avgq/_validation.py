"""Small input-validation helpers in the spirit of ``sklearn.utils.validation``."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.exceptions import NotFittedError


def check_states(X) -> np.ndarray:
    """Coerce states to a float array; an ``(n, 1)`` column is flattened."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 2 and X.shape[1] == 1:
        X = X[:, 0]
    if X.ndim > 1:
        raise ValueError(f"expected one-dimensional states, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("states must be finite")
    return X


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_probability_vector(p, name: str, tol: float = 1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(p < -tol) or abs(p.sum() - 1.0) > tol:
        raise ValueError(f"{name} must be a probability vector")
    return p


def check_is_fitted(estimator, attribute: str) -> None:
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call 'fit' first."
        )
