"""Shared input checks."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array


def as_points(X, arity: int) -> np.ndarray:
    """Coerce to a finite ``(n, arity)`` float array.

    A 1-D input is read as ``n`` scalar points when ``arity == 1`` and as a
    single point otherwise.  Extra trailing columns (a ``w23`` column) are
    dropped.
    """
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if arity == 1 else arr.reshape(1, -1)
    arr = check_array(arr, dtype=float, ensure_2d=True)
    if arr.shape[1] < arity:
        raise ValueError(f"expected {arity} coordinate(s) per point, got {arr.shape[1]}")
    return arr[:, :arity]


def as_vector(x, name: str, length: int | None = None) -> np.ndarray:
    arr = check_array(np.atleast_1d(np.asarray(x, dtype=float)), ensure_2d=False, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if length is not None and arr.shape[0] != length:
        raise ValueError(f"{name} must have length {length}, got {arr.shape[0]}")
    return arr


def as_square(x, name: str, size: int | None = None) -> np.ndarray:
    arr = check_array(np.asarray(x, dtype=float), dtype=float)
    if arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be square, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise ValueError(f"{name} must be {size}x{size}, got {arr.shape}")
    return arr
