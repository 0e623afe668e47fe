"""Exceptions and small input checks shared across the package."""

from __future__ import annotations

import numbers

import numpy as np


class ShapeError(ValueError):
    """Arrays or grid functions that do not live on the same grid."""


class DomainError(ValueError):
    """An argument lies outside the set where the quantity is defined."""


class ModelError(ValueError):
    """A model evaluator produced a non-finite or otherwise invalid value."""


def check_gamma(gamma, *, allow_zero=True):
    """Return ``gamma`` as a float, rejecting the risk-seeking regime."""
    if not isinstance(gamma, numbers.Real) or not np.isfinite(gamma):
        raise DomainError(f"gamma must be a finite real, got {gamma!r}")
    gamma = float(gamma)
    if gamma > 0:
        raise DomainError(f"gamma must be <= 0 (risk averse), got {gamma}")
    if gamma == 0 and not allow_zero:
        raise DomainError("gamma must be strictly negative here")
    return gamma


def check_positive(value, name, *, strict=True):
    value = float(value)
    if not np.isfinite(value) or value < 0 or (strict and value == 0):
        bound = "> 0" if strict else ">= 0"
        raise DomainError(f"{name} must be {bound}, got {value}")
    return value


def check_states(X, k):
    """Coerce ``X`` to a float array of shape (n, k).

    A single state of length ``k`` is promoted to a one-row array.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1) if X.size == k else X.reshape(-1, 1)
    if X.ndim != 2 or X.shape[1] != k:
        raise ShapeError(f"expected states of shape (n, {k}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DomainError("states must be finite")
    return X


def check_finite_vector(values, name="values"):
    values = np.asarray(values, dtype=float)
    if values.ndim != 1:
        raise ShapeError(f"{name} must be one-dimensional, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise DomainError(f"{name} must be finite")
    return values
