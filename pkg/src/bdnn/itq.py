"""Iterative Quantization (PCA + learned orthogonal rotation).

Used both as the initializer of the binary codes for the network trainers
and as a standalone baseline. Also home to the covariance eigen-solver the
network initializer shares.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, ValidationError
from .numerics import as_mat, sign


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    vectors = vectors.copy()
    idx = np.argmax(np.abs(vectors), axis=0)
    flip = vectors[idx, np.arange(vectors.shape[1])] < 0
    vectors[:, flip] *= -1
    return vectors


def covariance(x: np.ndarray) -> np.ndarray:
    """Sample covariance of a column-per-sample matrix (1/m normalization)."""
    centered = x - x.mean(axis=1, keepdims=True)
    return centered @ centered.T / x.shape[1]


def top_eigenvectors(x: np.ndarray, k: int, rng: np.random.Generator | None = None,
                     tol: float = 1e-10) -> np.ndarray:
    """Top-``k`` covariance eigenvectors of ``x`` as the columns of a D x k matrix.

    When fewer than ``k`` directions carry variance (rank deficiency, or
    ``k`` larger than the dimension) the missing columns are filled with
    small random vectors of scale 1e-3 and a warning is issued.
    """
    d = x.shape[0]
    vals, vecs = np.linalg.eigh(covariance(x))
    order = np.argsort(vals, kind="stable")[::-1]
    vals, vecs = vals[order], vecs[:, order]
    scale = max(float(vals[0]), 0.0) if vals.size else 0.0
    usable = int(np.sum(vals > tol * max(scale, 1e-300)))
    take = min(k, usable)
    out = np.empty((d, k))
    out[:, :take] = fix_signs(vecs[:, :take])
    if take < k:
        warnings.warn(
            f"covariance has {usable} usable directions but {k} were requested; "
            "padding with small random vectors", RuntimeWarning, stacklevel=2)
        rng = rng if rng is not None else np.random.default_rng(0)
        out[:, take:] = 1e-3 * rng.standard_normal((d, k - take))
    return out


def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))


@dataclass
class ItqModel:
    mean: np.ndarray          # (D,)
    projection: np.ndarray    # D x L, orthonormal columns
    rotation: np.ndarray      # L x L, orthogonal
    loss_history: list[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.projection.shape[0]

    @property
    def bits(self) -> int:
        return self.projection.shape[1]

    def project(self, x: np.ndarray) -> np.ndarray:
        """Rotated PCA coordinates, L x m."""
        x = as_mat(x)
        if x.shape[0] != self.dim:
            raise ShapeError(f"ITQ model expects {self.dim} features, data has {x.shape[0]}")
        return self.rotation.T @ (self.projection.T @ (x - self.mean[:, None]))


def quantization_loss(b: np.ndarray, v: np.ndarray) -> float:
    r = b - v
    return float(np.vdot(r, r))


def itq_train(x: np.ndarray, bits: int, iters: int = 50, seed: int = 0) -> ItqModel:
    """Fit ITQ on a D x m matrix.

    Each round fixes the rotation to get ``B = sign(R^T V)`` and then solves
    the orthogonal Procrustes problem ``min_R ||B - R^T V||`` by SVD of
    ``V B^T``. ``loss_history`` holds the loss after every round (entry 0 is
    the loss of the random initial rotation).
    """
    x = as_mat(x)
    d, m = x.shape
    if m <= bits:
        raise ValidationError(f"ITQ needs more samples than bits (m={m}, L={bits})")
    if bits > d:
        raise ValidationError(f"cannot learn {bits} bits from {d}-dimensional data")
    rng = np.random.default_rng(seed)
    mean = x.mean(axis=1)
    centered = x - mean[:, None]
    projection = top_eigenvectors(x, bits, rng)
    v = projection.T @ centered
    rot = random_orthogonal(bits, rng)
    history = [quantization_loss(sign(rot.T @ v), rot.T @ v)]
    for _ in range(iters):
        b = sign(rot.T @ v).astype(np.float64)
        # min ||B - R^T V||  <=>  max tr(R^T V B^T)
        u, _, vt = np.linalg.svd(v @ b.T)
        rot = u @ vt
        history.append(quantization_loss(sign(rot.T @ v), rot.T @ v))
    return ItqModel(mean=mean, projection=projection, rotation=rot, loss_history=history)


def itq_encode(model: ItqModel, x: np.ndarray) -> np.ndarray:
    return sign(model.project(x))
