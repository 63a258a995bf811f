"""Binary weight exchange format.

Layout (all integers little-endian)::

    b"FRUL" | version u16 | tensor count u32
    per tensor: name length u16 | UTF-8 name | rank u8 | dims u32 * rank |
                float64 LE values, row-major

The encoding is canonical: equal parameters always give identical bytes.
"""

from __future__ import annotations

import struct
from typing import Dict

import numpy as np

MAGIC = b"FRUL"
VERSION = 1


class WeightFormatError(ValueError):
    pass


class BadMagicError(WeightFormatError):
    pass


class UnsupportedVersionError(WeightFormatError):
    pass


class TruncatedStreamError(WeightFormatError):
    pass


class InconsistentShapeError(WeightFormatError):
    pass


def serialize_params(params: Dict[str, np.ndarray]) -> bytes:
    out = bytearray(MAGIC)
    out += struct.pack("<HI", VERSION, len(params))
    for name, tensor in params.items():
        if np.ndim(tensor) == 0:
            raise InconsistentShapeError(f"{name}: rank-0 tensors are not supported")
        arr = np.ascontiguousarray(tensor, dtype="<f8")
        if arr.ndim > 255 or any(d < 1 for d in arr.shape):
            raise InconsistentShapeError(f"{name}: unsupported shape {arr.shape}")
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise InconsistentShapeError(f"name too long: {name[:40]}...")
        out += struct.pack("<H", len(raw)) + raw
        out += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int, what: str) -> memoryview:
        if self.pos + n > len(self.data):
            raise TruncatedStreamError(
                f"stream ends at byte {len(self.data)} while reading {what} "
                f"({n} bytes at offset {self.pos})"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def deserialize_params(data: bytes) -> Dict[str, np.ndarray]:
    """Parse a weight stream.

    Raises:
        BadMagicError, UnsupportedVersionError, TruncatedStreamError,
        InconsistentShapeError: one per failure kind.
    """
    r = _Reader(data)
    if len(data) < 4 or bytes(r.take(4, "magic")) != MAGIC:
        raise BadMagicError("not a FRUL weight stream")
    (version,) = r.unpack("<H", "version")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    (count,) = r.unpack("<I", "tensor count")
    params: Dict[str, np.ndarray] = {}
    for k in range(count):
        (name_len,) = r.unpack("<H", f"name length of tensor {k}")
        try:
            name = bytes(r.take(name_len, f"name of tensor {k}")).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WeightFormatError(f"tensor {k}: bad name encoding") from exc
        (rank,) = r.unpack("<B", f"rank of {name}")
        if rank == 0:
            raise InconsistentShapeError(f"{name}: rank 0")
        dims = r.unpack(f"<{rank}I", f"dims of {name}")
        if any(d == 0 for d in dims):
            raise InconsistentShapeError(f"{name}: zero dimension in {dims}")
        if name in params:
            raise InconsistentShapeError(f"duplicate tensor name {name}")
        size = int(np.prod(dims, dtype=np.int64))
        raw = r.take(8 * size, f"values of {name}")
        params[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(dims)
    if r.pos != len(data):
        raise InconsistentShapeError(f"{len(data) - r.pos} trailing bytes after last tensor")
    return params


def params_to_text(params: Dict[str, np.ndarray]) -> str:
    """Human-readable dump: name, shape, then nested value lists."""
    lines = []
    for name, t in params.items():
        lines.append(f"{name} {list(t.shape)}")
        lines.append("  " + np.array2string(t, separator=", ", threshold=np.inf, precision=17).replace("\n", "\n  "))
    return "\n".join(lines) + "\n"
