"""Dense matrix helpers and activations shared by the trainers.

Matrices are plain 2-D ``float64`` numpy arrays. The helpers here add the
shape checking and finiteness guarantees the training code relies on.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError

SIGMOID = "sigmoid"
IDENTITY = "identity"
ACTIVATIONS = (SIGMOID, IDENTITY)


def as_mat(a) -> np.ndarray:
    """Coerce ``a`` to a 2-D float64 array (1-D input becomes a column)."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise ShapeError(f"expected a matrix, got array with shape {m.shape}")
    return m


def _check_finite(m: np.ndarray, what: str) -> np.ndarray:
    if not np.isfinite(m).all():
        raise NumericError(f"{what} produced non-finite entries")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = as_mat(a), as_mat(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return _check_finite(a @ b, "matmul")


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = as_mat(a), as_mat(b)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard needs equal shapes, got {a.shape} and {b.shape}")
    return a * b


def add_col(a: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Return ``a + c 1_{1xm}`` without building the ones row."""
    c = np.asarray(c, dtype=np.float64).reshape(-1)
    if c.shape[0] != a.shape[0]:
        raise ShapeError(f"bias of length {c.shape[0]} does not match {a.shape[0]} rows")
    return a + c[:, None]


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    # exp(-|z|) never overflows
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0, e) / (1.0 + e)


def sigmoid_prime(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    # sigma(z) * sigma(-z) = e / (1 + e)^2, precise in both tails
    e = np.exp(-np.abs(z))
    return e / (1.0 + e) ** 2


def activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == SIGMOID:
        return sigmoid(z)
    if kind == IDENTITY:
        return z
    raise ValueError(f"unknown activation {kind!r}")


def activate_prime(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == SIGMOID:
        return sigmoid_prime(z)
    if kind == IDENTITY:
        return np.ones_like(z)
    raise ValueError(f"unknown activation {kind!r}")


def frob_sq(a: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    return float(np.vdot(a, a))


def sign(a: np.ndarray) -> np.ndarray:
    """Elementwise sign into {-1, +1} as int8; zero maps to +1."""
    return np.where(np.asarray(a) >= 0, 1, -1).astype(np.int8)
