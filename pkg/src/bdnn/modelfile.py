"""Versioned binary container for trained hash networks and ITQ models.

Layout (all integers little-endian uint32, reals little-endian float64)::

    "BDNN"  version  mode[4]  n  layer_sizes[n]  activations[n] (uint8)  code_layer
    meta_len  meta (UTF-8 JSON, sorted keys)
    payload

For UH/SH networks the payload is, per layer l = 1..n-1, W^(l) row-major
then c^(l). For ITQ (n = 2, layer_sizes = [D, L]) it is the mean (D),
the projection (D x L, row-major) and the rotation (L x L, row-major).
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import FormatError
from .hashnet import NetConfig, NetParams
from .itq import ItqModel
from .numerics import ACTIVATIONS, IDENTITY

MAGIC = b"BDNN"
VERSION = 1
_MODES = {"UH": b"UH\0\0", "SH": b"SH\0\0", "ITQ": b"ITQ\0"}
_ACT_CODES = {name: i for i, name in enumerate(ACTIVATIONS)}


def _header(mode: str, sizes, acts, code_layer: int, meta: dict) -> bytes:
    n = len(sizes)
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode()
    return b"".join([
        MAGIC, struct.pack("<I", VERSION), _MODES[mode], struct.pack("<I", n),
        struct.pack(f"<{n}I", *sizes), bytes(_ACT_CODES[a] for a in acts),
        struct.pack("<I", code_layer), struct.pack("<I", len(meta_bytes)), meta_bytes,
    ])


def _f64(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def dump_network(config: NetConfig, params: NetParams, meta: dict | None = None) -> bytes:
    params.check(config)
    parts = [_header(config.mode, config.layer_sizes, config.activations, config.code_layer, meta)]
    for w, c in zip(params.weights, params.biases):
        parts += [_f64(w), _f64(c)]
    return b"".join(parts)


def dump_itq(model: ItqModel, meta: dict | None = None) -> bytes:
    sizes = (model.dim, model.bits)
    return b"".join([_header("ITQ", sizes, (IDENTITY, IDENTITY), 2, meta),
                     _f64(model.mean), _f64(model.projection), _f64(model.rotation)])


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, nbytes: int, what: str) -> bytes:
        if self.pos + nbytes > len(self.data):
            raise FormatError(f"truncated model file while reading {what}", self.pos)
        out = self.data[self.pos:self.pos + nbytes]
        self.pos += nbytes
        return out

    def u32(self, what: str, count: int = 1):
        vals = struct.unpack(f"<{count}I", self.take(4 * count, what))
        return vals if count > 1 else vals[0]

    def f64(self, shape, what: str) -> np.ndarray:
        size = int(np.prod(shape))
        return np.frombuffer(self.take(8 * size, what), dtype="<f8").reshape(shape).astype(np.float64)


def loads(data: bytes):
    """Parse a container. Returns ``(mode, model, meta)`` where ``model`` is
    ``(NetConfig, NetParams)`` for networks or an :class:`ItqModel`."""
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("not a BDNN model file", 0)
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported model format version {version}", 4)
    tag = r.take(4, "mode")
    modes = {v: k for k, v in _MODES.items()}
    if tag not in modes:
        raise FormatError(f"unknown mode tag {tag!r}", 8)
    mode = modes[tag]
    n = r.u32("layer count")
    sizes = r.u32("layer sizes", n) if n > 1 else (r.u32("layer sizes"),)
    codes = r.take(n, "activations")
    if any(c >= len(ACTIVATIONS) for c in codes):
        raise FormatError("unknown activation code", r.pos - n)
    acts = tuple(ACTIVATIONS[c] for c in codes)
    code_layer = r.u32("code layer")
    meta_len = r.u32("metadata length")
    try:
        meta = json.loads(r.take(meta_len, "metadata").decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt metadata: {exc}", r.pos) from exc
    if mode == "ITQ":
        d, L = sizes
        model = ItqModel(r.f64((d,), "mean"), r.f64((d, L), "projection"),
                         r.f64((L, L), "rotation"))
    else:
        config = NetConfig(tuple(sizes), acts, code_layer, mode)
        weights, biases = [], []
        for i in range(n - 1):
            weights.append(r.f64((sizes[i + 1], sizes[i]), f"W{i + 1}"))
            biases.append(r.f64((sizes[i + 1],), f"c{i + 1}"))
        model = (config, NetParams(weights, biases))
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after model payload", r.pos)
    return mode, model, meta


def save(path, data: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(data)


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
