"""Dataset loading, feature-matrix files, and deterministic splits.

Datasets are column-per-sample: ``x`` is D x m.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
FMAT_MAGIC = b"BFM1"


@dataclass
class Dataset:
    x: np.ndarray                      # D x m, float64
    labels: np.ndarray | None = None   # (m,) int64

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 2:
            raise ValidationError(f"feature matrix must be 2-D, got shape {self.x.shape}")
        if not np.isfinite(self.x).all():
            raise ValidationError("feature matrix contains non-finite values")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if self.labels.shape[0] != self.x.shape[1]:
                raise ValidationError(f"{self.labels.shape[0]} labels for {self.x.shape[1]} samples")

    @property
    def dim(self) -> int:
        return self.x.shape[0]

    def __len__(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx)
        return Dataset(self.x[:, idx], None if self.labels is None else self.labels[idx])


def _read(path) -> bytes:
    return Path(path).read_bytes()


def load_idx(images_path, labels_path=None, scale: bool = False) -> Dataset:
    """Read an idx3 image file (and optionally its idx1 label file).

    Pixels become one column each, flattened row-major. With ``scale`` the
    byte values are divided by 255.
    """
    raw = _read(images_path)
    if len(raw) < 16:
        raise FormatError(f"{images_path}: truncated idx header", len(raw))
    magic, count, rows, cols = struct.unpack_from(">IIII", raw, 0)
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"{images_path}: bad idx image magic 0x{magic:08x}", 0)
    need = 16 + count * rows * cols
    if len(raw) != need:
        raise FormatError(f"{images_path}: header announces {count} images of {rows}x{cols} "
                          f"({need} bytes) but file has {len(raw)} bytes", min(len(raw), need))
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(count, rows * cols)
    x = pixels.T.astype(np.float64)
    if scale:
        x /= 255.0
    labels = None
    if labels_path is not None:
        lraw = _read(labels_path)
        if len(lraw) < 8:
            raise FormatError(f"{labels_path}: truncated idx header", len(lraw))
        lmagic, lcount = struct.unpack_from(">II", lraw, 0)
        if lmagic != IDX_LABELS_MAGIC:
            raise FormatError(f"{labels_path}: bad idx label magic 0x{lmagic:08x}", 0)
        if len(lraw) != 8 + lcount:
            raise FormatError(f"{labels_path}: header announces {lcount} labels but file has "
                              f"{len(lraw) - 8} label bytes", min(len(lraw), 8 + lcount))
        if lcount != count:
            raise FormatError(f"{count} images but {lcount} labels", 4)
        labels = np.frombuffer(lraw, dtype=np.uint8, offset=8).astype(np.int64)
    return Dataset(x, labels)


def save_fmat(path, data: Dataset) -> None:
    """Write the BFM1 container: magic, D, m, label flag, float32 column-major, int32 labels."""
    d, m = data.x.shape
    if m == 0 or d == 0:
        raise ValidationError("refusing to save an empty feature matrix")
    has_labels = data.labels is not None
    with open(path, "wb") as fh:
        fh.write(FMAT_MAGIC)
        fh.write(struct.pack("<IIB", d, m, int(has_labels)))
        # column-major means each sample's features are contiguous
        fh.write(np.asarray(data.x.T, dtype="<f4").tobytes())
        if has_labels:
            fh.write(data.labels.astype("<i4").tobytes())


def load_fmat(path) -> Dataset:
    raw = _read(path)
    if raw[:4] != FMAT_MAGIC:
        raise FormatError(f"{path}: not a BFM1 file (magic {raw[:4]!r})", 0)
    if len(raw) < 13:
        raise FormatError(f"{path}: truncated header", len(raw))
    d, m, flag = struct.unpack_from("<IIB", raw, 4)
    if flag not in (0, 1):
        raise FormatError(f"{path}: label flag must be 0 or 1, got {flag}", 12)
    need = 13 + 4 * d * m + (4 * m if flag else 0)
    if len(raw) != need:
        raise FormatError(f"{path}: expected {need} bytes for D={d}, m={m}, found {len(raw)}",
                          min(len(raw), need))
    x = np.frombuffer(raw, dtype="<f4", count=d * m, offset=13).reshape(m, d).T.astype(np.float64)
    labels = None
    if flag:
        labels = np.frombuffer(raw, dtype="<i4", count=m, offset=13 + 4 * d * m).astype(np.int64)
    return Dataset(x, labels)


def split(data: Dataset, query_count: int | None = None, per_class_query_count: int | None = None,
          seed: int = 0) -> tuple[Dataset, Dataset, np.ndarray, np.ndarray]:
    """Random database/query split.

    Exactly one of ``query_count`` (uniform) or ``per_class_query_count``
    (stratified, needs labels) must be given. Returns the two datasets and
    the sorted index arrays they were drawn from.
    """
    if (query_count is None) == (per_class_query_count is None):
        raise ValidationError("give exactly one of query_count or per_class_query_count")
    m = len(data)
    rng = np.random.default_rng(seed)
    if query_count is not None:
        if not 0 < query_count < m:
            raise ValidationError(f"query_count={query_count} infeasible for {m} samples")
        q_idx = rng.choice(m, size=query_count, replace=False)
    else:
        if data.labels is None:
            raise ValidationError("stratified split needs labels")
        picks = []
        for cls in np.unique(data.labels):
            members = np.flatnonzero(data.labels == cls)
            if per_class_query_count < 1 or per_class_query_count >= members.size:
                raise ValidationError(f"class {cls} has {members.size} samples; cannot take "
                                      f"{per_class_query_count} queries and keep a database item")
            picks.append(rng.choice(members, size=per_class_query_count, replace=False))
        q_idx = np.concatenate(picks)
    q_idx = np.sort(q_idx)
    db_idx = np.setdiff1d(np.arange(m), q_idx)
    return data.subset(db_idx), data.subset(q_idx), db_idx, q_idx


def standardize(train: np.ndarray, *others: np.ndarray) -> list[np.ndarray]:
    """Per-feature zero mean / unit variance using statistics of ``train``."""
    mu = train.mean(axis=1, keepdims=True)
    sd = train.std(axis=1, keepdims=True)
    sd[sd == 0] = 1.0
    return [(a - mu) / sd for a in (train, *others)]
