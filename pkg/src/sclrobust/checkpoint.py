"""Binary checkpoint format.

Layout, all integers little-endian::

    magic      4 bytes   b"SCLR"
    version    u32       1
    digest     32 bytes  SHA-256 of the canonical ModelConfig JSON
    count      u32       number of tensors
    per tensor, sorted by name:
        u16 name length, UTF-8 name, u8 rank, rank x u32 dims, f32 payload
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .model import ModelConfig, ModelParams, parameter_shapes

MAGIC = b"SCLR"
VERSION = 1
DIGEST_BYTES = 32


class CheckpointError(ValueError):
    pass


def encode(params: ModelParams) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION), params.config.digest(), struct.pack("<I", len(params.tensors))]
    for name in params.names():
        data = params.tensors[name].data
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)) + encoded)
        parts.append(struct.pack("<B", data.ndim) + struct.pack(f"<{data.ndim}I", *data.shape))
        parts.append(data.astype("<f4").tobytes())
    return b"".join(parts)


def save_checkpoint(params: ModelParams, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(params))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated checkpoint: need {n} bytes for {what}, {len(self.buf) - self.pos} left")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode(buf: bytes, config: ModelConfig) -> ModelParams:
    r = _Reader(buf)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {VERSION}")
    if r.take(DIGEST_BYTES, "config digest") != config.digest():
        raise CheckpointError("model config digest mismatch: checkpoint was written for a different model config")
    (count,) = r.unpack("<I", "tensor count")
    arrays = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H", "name length")
        name = r.take(name_len, "tensor name").decode("utf-8")
        (rank,) = r.unpack("<B", f"rank of {name}")
        dims = r.unpack(f"<{rank}I", f"dims of {name}")
        n = int(np.prod(dims, dtype=np.int64))
        payload = r.take(4 * n, f"payload of tensor {name!r}")
        arrays[name] = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims)
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} trailing bytes after the last tensor")
    expected = parameter_shapes(config)
    if set(arrays) != set(expected):
        raise CheckpointError(f"tensor names {sorted(arrays)} do not match the model {sorted(expected)}")
    for name, shape in expected.items():
        if arrays[name].shape != shape:
            raise CheckpointError(f"tensor {name!r} has shape {arrays[name].shape}, expected {shape}")
    return ModelParams(config, {}).replace(arrays)


def load_checkpoint(path: str | os.PathLike, config: ModelConfig) -> ModelParams:
    with open(path, "rb") as fh:
        return decode(fh.read(), config)


def round_trip(params: ModelParams) -> ModelParams:
    """The parameters exactly as a saved-then-loaded checkpoint would hold them."""
    return decode(encode(params), params.config)
