"""Binary checkpoint format for :class:`~rwkg.rotate.Model`.

Layout (all integers little-endian)::

    b"RWKGCKPT" | u32 version | u32 k | u32 N | u32 R | f64 margin
    N x (u32 len, utf-8 id, u32 len, utf-8 type)
    R x (u32 len, utf-8 relation)
    f64[N*2k] entity | f64[R*k] phase | f64[R] weights
    32-byte SHA-256 of everything above
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .rotate import Model

MAGIC = b"RWKGCKPT"
VERSION = 1


class CheckpointError(IOError):
    pass


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def save_checkpoint(model: Model, path) -> None:
    n = len(model.node_ids)
    r = len(model.relations)
    types = model.node_types or ("",) * n
    parts = [MAGIC, struct.pack("<IIIId", VERSION, model.dim, n, r, model.margin)]
    for nid, tag in zip(model.node_ids, types):
        parts += [_pack_str(nid), _pack_str(tag)]
    parts += [_pack_str(rel) for rel in model.relations]
    for arr in (model.entity, model.phase, model.relation_weight):
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = b"".join(parts)
    try:
        Path(path).write_bytes(body + hashlib.sha256(body).digest())
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError("checkpoint truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)


def load_checkpoint(path) -> Model:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < len(MAGIC) + 32 or not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint or truncated")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: integrity digest mismatch (corrupted or truncated)")
    rd = _Reader(body)
    rd.take(len(MAGIC))
    version, k, n, r, margin = rd.unpack("<IIIId")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    ids, types = [], []
    for _ in range(n):
        ids.append(rd.string())
        types.append(rd.string())
    rels = tuple(rd.string() for _ in range(r))
    entity = rd.floats(n * 2 * k).reshape(n, 2 * k)
    phase = rd.floats(r * k).reshape(r, k)
    weights = rd.floats(r)
    if rd.pos != len(body):
        raise CheckpointError(f"{path}: trailing bytes in checkpoint")
    return Model(tuple(ids), rels, entity, phase, weights, margin,
                 tuple(types) if any(types) else ())
