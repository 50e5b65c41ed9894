"""Bit-packed binary codes and exact Hamming-distance search.

Code bit ``b`` (row ``b`` of an L x m code matrix) lives in word ``b // 64``
at bit position ``b % 64``; a set bit means +1. Padding bits are zero.
Rankings order by distance, ties broken by ascending database index.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ShapeError, ValidationError

CODES_MAGIC = b"BHC1"


@dataclass(frozen=True)
class PackedCodes:
    bits: int
    words: np.ndarray   # (m, ceil(bits / 64)) uint64

    def __len__(self) -> int:
        return self.words.shape[0]

    @property
    def n_words(self) -> int:
        return self.words.shape[1]

    def __getitem__(self, i) -> np.ndarray:
        return self.words[i]


def words_for(bits: int) -> int:
    return (bits + 63) // 64


def pack(codes: np.ndarray) -> PackedCodes:
    """Pack an L x m matrix over {-1, +1}."""
    codes = np.asarray(codes)
    if codes.ndim == 1:
        codes = codes[:, None]
    if codes.ndim != 2:
        raise ShapeError(f"codes must be L x m, got shape {codes.shape}")
    if not np.isin(codes, (-1, 1)).all():
        raise ValidationError("codes must contain only -1 and +1")
    L, m = codes.shape
    nw = words_for(L)
    bits = np.zeros((m, nw * 64), dtype=np.uint8)
    bits[:, :L] = (codes.T > 0)
    # little-endian bit order inside each little-endian word
    packed = np.packbits(bits.reshape(m, nw, 64), axis=2, bitorder="little")
    words = packed.view("<u8").reshape(m, nw).astype(np.uint64)
    return PackedCodes(L, words)


def unpack(packed: PackedCodes) -> np.ndarray:
    m, nw = packed.words.shape
    raw = packed.words.astype("<u8").view(np.uint8).reshape(m, nw * 8)
    bits = np.unpackbits(raw, axis=1, bitorder="little")[:, :packed.bits]
    return np.where(bits.T == 1, 1, -1).astype(np.int8)


def hamming(a: np.ndarray, b: np.ndarray) -> int:
    a = np.asarray(a, dtype=np.uint64).reshape(-1)
    b = np.asarray(b, dtype=np.uint64).reshape(-1)
    if a.shape != b.shape:
        raise ShapeError(f"codes of different lengths: {a.size} and {b.size} words")
    return int(np.bitwise_count(a ^ b).sum())


def _query_words(db: PackedCodes, query) -> np.ndarray:
    if isinstance(query, PackedCodes):
        if query.bits != db.bits:
            raise ShapeError(f"query has {query.bits} bits, database has {db.bits}")
        return query.words
    q = np.asarray(query, dtype=np.uint64)
    if q.ndim == 1:
        q = q[None, :]
    if q.shape[1] != db.n_words:
        raise ShapeError(f"query has {q.shape[1]} words, database codes have {db.n_words}")
    return q


def distances(db: PackedCodes, query, workers: int = 1) -> np.ndarray:
    """Hamming distances, shape (n_queries, m), int32.

    With ``workers > 1`` the database is split into contiguous shards that are
    scanned concurrently; the result is identical to the single-threaded scan.
    """
    q = _query_words(db, query)
    out = np.empty((q.shape[0], len(db)), dtype=np.int32)
    if len(db) == 0:
        return out

    def scan(lo, hi):
        # query blocks bound the size of the XOR temporaries
        for qs in range(0, q.shape[0], 256):
            block = q[qs:qs + 256]
            acc = np.zeros((block.shape[0], hi - lo), dtype=np.int32)
            for w in range(db.n_words):
                acc += np.bitwise_count(block[:, w, None] ^ db.words[None, lo:hi, w])
            out[qs:qs + 256, lo:hi] = acc

    if workers <= 1:
        scan(0, len(db))
    else:
        bounds = np.linspace(0, len(db), workers + 1).astype(int)
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(scan, bounds[:-1], bounds[1:]))
    return out


def rank(dist_row: np.ndarray, k: int | None = None) -> np.ndarray:
    """Indices sorted by (distance, index); the first ``k`` if given."""
    order = np.argsort(dist_row, kind="stable")
    return order if k is None else order[:k]


@dataclass
class Ranking:
    """One query's retrieval list."""
    indices: np.ndarray
    distances: np.ndarray


def search_topk(db: PackedCodes, query, k: int, workers: int = 1) -> Ranking:
    if k < 1:
        raise ValidationError(f"k must be at least 1, got {k}")
    d = distances(db, query, workers)
    if d.shape[0] != 1:
        raise ShapeError("search_topk takes a single query; use search_topk_batch")
    idx = rank(d[0], k)
    return Ranking(idx, d[0, idx])


def search_topk_batch(db: PackedCodes, queries, k: int | None = None,
                      workers: int = 1) -> list[Ranking]:
    d = distances(db, queries, workers)
    out = []
    for row in d:
        idx = rank(row, k)
        out.append(Ranking(idx, row[idx]))
    return out


def search_radius(db: PackedCodes, query, r: int, workers: int = 1) -> np.ndarray:
    """All database indices within Hamming distance ``r``, ascending."""
    if r < 0 or r > db.bits:
        raise ValidationError(f"radius {r} outside 0..{db.bits}")
    d = distances(db, query, workers)
    if d.shape[0] != 1:
        raise ShapeError("search_radius takes a single query")
    return np.flatnonzero(d[0] <= r)


def save_codes(path, packed: PackedCodes) -> None:
    with open(path, "wb") as fh:
        fh.write(CODES_MAGIC)
        fh.write(struct.pack("<II", packed.bits, len(packed)))
        fh.write(packed.words.astype("<u8").tobytes())


def load_codes(path) -> PackedCodes:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CODES_MAGIC:
        raise FormatError(f"not a codes file: magic {data[:4]!r}", 0)
    if len(data) < 12:
        raise FormatError("truncated header", len(data))
    bits, m = struct.unpack_from("<II", data, 4)
    nw = words_for(bits)
    need = 12 + 8 * nw * m
    if len(data) != need:
        raise FormatError(f"expected {need} bytes for {m} codes of {bits} bits, found {len(data)}",
                          min(len(data), need))
    words = np.frombuffer(data, dtype="<u8", offset=12).reshape(m, nw).astype(np.uint64)
    if bits % 64:
        if np.any(words[:, -1] >> np.uint64(bits % 64)):
            raise FormatError("padding bits are not zero", 12)
    return PackedCodes(bits, words)
