"""Versioned binary checkpoints.

Layout (all integers little-endian u32)::

    b"EMTS" | version | len(config) | config (UTF-8) | tensor count
    per tensor: len(name) | name (UTF-8) | rank | extents... | float32 payload
    trailer: 8-byte BLAKE2b digest of every preceding byte

Optimizer tensors are stored under ``__optim__/`` and data statistics under
``__data__/``; everything else is a model parameter or buffer.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    CheckpointError,
    ChecksumMismatchError,
    TruncatedCheckpointError,
    UnsupportedVersionError,
)

MAGIC = b"EMTS"
VERSION = 1
OPTIM_PREFIX = "__optim__/"
DATA_PREFIX = "__data__/"
_U32 = struct.Struct("<I")
_DIGEST = 8


def checksum(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=_DIGEST).digest()


@dataclass
class Checkpoint:
    config_text: str
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def model_state(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.tensors.items()
                if not k.startswith((OPTIM_PREFIX, DATA_PREFIX))}

    def section(self, prefix: str) -> dict[str, np.ndarray]:
        return {k[len(prefix):]: v for k, v in self.tensors.items() if k.startswith(prefix)}


def encode(ckpt: Checkpoint) -> bytes:
    config = ckpt.config_text.encode("utf-8")
    parts = [MAGIC, _U32.pack(VERSION), _U32.pack(len(config)), config, _U32.pack(len(ckpt.tensors))]
    for name, array in ckpt.tensors.items():
        raw = name.encode("utf-8")
        array = np.asarray(array)
        parts += [_U32.pack(len(raw)), raw, _U32.pack(array.ndim)]
        parts += [_U32.pack(n) for n in array.shape]
        parts.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + checksum(body)


class _Reader:
    def __init__(self, data: bytes, end: int):
        self.data = data
        self.end = end
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > self.end:
            raise TruncatedCheckpointError(
                f"checkpoint ends after {self.end} bytes; needed {self.pos + n - self.end} more")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def decode(data: bytes) -> Checkpoint:
    if len(data) < len(MAGIC):
        raise TruncatedCheckpointError(f"checkpoint is only {len(data)} bytes")
    if data[:4] != MAGIC:
        raise BadMagicError(f"not a checkpoint: magic {data[:4]!r} != {MAGIC!r}")
    reader = _Reader(data, max(len(data) - _DIGEST, 0))
    reader.take(4)
    version = reader.u32()
    if version != VERSION:
        raise UnsupportedVersionError(f"checkpoint version {version} (supported: {VERSION})")
    try:
        config = reader.take(reader.u32()).decode("utf-8")
        tensors: dict[str, np.ndarray] = {}
        for _ in range(reader.u32()):
            name = reader.take(reader.u32()).decode("utf-8")
            if name in tensors:
                raise CheckpointError(f"duplicate tensor name {name!r}")
            shape = tuple(reader.u32() for _ in range(reader.u32()))
            count = int(np.prod(shape, dtype=np.int64))
            tensors[name] = np.frombuffer(reader.take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
    except UnicodeDecodeError as exc:
        _verify(data)
        raise CheckpointError(f"undecodable text in checkpoint: {exc}") from None
    _verify(data)
    if reader.pos != reader.end:
        raise CheckpointError(f"{reader.end - reader.pos} unexpected bytes before the checksum")
    return Checkpoint(config, tensors)


def _verify(data: bytes) -> None:
    if len(data) < _DIGEST + 4:
        raise TruncatedCheckpointError(f"checkpoint is only {len(data)} bytes")
    if checksum(data[:-_DIGEST]) != data[-_DIGEST:]:
        raise ChecksumMismatchError("checkpoint checksum does not match its contents")


def save(path, ckpt: Checkpoint) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(ckpt))
    return path


def load(path) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    return decode(data)


def bundle(config_text: str, model_state: dict, optimizer_state: dict | None = None,
           data_state: dict | None = None) -> Checkpoint:
    tensors = dict(model_state)
    for prefix, extra in ((OPTIM_PREFIX, optimizer_state), (DATA_PREFIX, data_state)):
        for name, value in (extra or {}).items():
            tensors[prefix + name] = np.asarray(value)
    return Checkpoint(config_text, tensors)
