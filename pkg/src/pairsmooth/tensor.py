"""Dense float64 matrix helpers used by the model and the losses.

Matrices are plain 2-D ``numpy`` arrays. Every helper validates shapes up
front and refuses to broadcast, so gradient code stays easy to audit.
"""

import numpy as np


class DimensionError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


def as_matrix(a, name="matrix"):
    """Return ``a`` as a C-contiguous float64 2-D array, validating finiteness."""
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must have positive dimensions, got {arr.shape}")
    return _finite(arr, name)


def _finite(arr, name="result"):
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return arr


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def matmul(a, b):
    a, b = as_matrix(a, "a"), as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return _finite(a @ b, "matmul")


def add(a, b):
    a, b = as_matrix(a, "a"), as_matrix(b, "b")
    _same_shape(a, b, "add")
    return _finite(a + b, "add")


def scale(a, c):
    return _finite(float(c) * as_matrix(a), "scale")


def hadamard(a, b):
    a, b = as_matrix(a, "a"), as_matrix(b, "b")
    _same_shape(a, b, "hadamard")
    return _finite(a * b, "hadamard")


def transpose(a):
    return as_matrix(a).T.copy()


def row_sum(a):
    """Sum each row; returns a column of shape (rows, 1)."""
    return as_matrix(a).sum(axis=1, keepdims=True)


def relu(a):
    return np.maximum(as_matrix(a), 0.0)


def sigmoid(a):
    a = as_matrix(a)
    # exp of a non-positive argument only, so neither branch overflows
    e = np.exp(-np.abs(a))
    return np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def log_softmax_rows(z):
    z = as_matrix(z, "z")
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_rows(z):
    """Row-wise softmax with max subtraction; safe for any finite input."""
    z = as_matrix(z, "z")
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)
