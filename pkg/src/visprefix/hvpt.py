"""HVPT binary tensor format.

Layout of one record: ``b"HVPT"``, version byte 1, u8 rank, rank x u32
little-endian dims, then prod(dims) little-endian float32 values. Files hold
records back to back; readers address them by byte offset.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

from .errors import FormatError

MAGIC = b"HVPT"
VERSION = 1
_LE_F32 = np.dtype("<f4")


def encode(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if array.ndim > 255:
        raise FormatError("rank above 255 is not representable")
    if any(d <= 0 for d in array.shape):
        raise FormatError(f"HVPT dims must be positive, got {array.shape}")
    head = MAGIC + bytes([VERSION, array.ndim]) + struct.pack(f"<{array.ndim}I", *array.shape)
    return head + np.ascontiguousarray(array, dtype=_LE_F32).tobytes()


def write_tensor(f: BinaryIO, array: np.ndarray) -> int:
    """Append one record; returns the number of bytes written."""
    blob = encode(array)
    f.write(blob)
    return len(blob)


def decode(buf: bytes | memoryview, offset: int = 0) -> tuple[np.ndarray, int]:
    """Read the record starting at ``offset``; returns (array, next offset)."""
    buf = memoryview(buf)
    if offset + 6 > len(buf):
        raise FormatError(f"truncated HVPT header at offset {offset}")
    if bytes(buf[offset:offset + 4]) != MAGIC:
        raise FormatError(f"bad HVPT magic at offset {offset}: {bytes(buf[offset:offset + 4])!r}")
    version, rank = buf[offset + 4], buf[offset + 5]
    if version != VERSION:
        raise FormatError(f"unsupported HVPT version {version} at offset {offset}")
    pos = offset + 6
    if pos + 4 * rank > len(buf):
        raise FormatError(f"truncated HVPT dims at offset {pos}")
    dims = struct.unpack_from(f"<{rank}I", buf, pos)
    pos += 4 * rank
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    end = pos + 4 * count
    if end > len(buf):
        raise FormatError(f"truncated HVPT payload at offset {pos}: need {4 * count} bytes, "
                          f"have {len(buf) - pos}")
    data = np.frombuffer(buf[pos:end], dtype=_LE_F32).reshape(dims).astype(np.float32)
    return data, end


def read_all(buf: bytes) -> list[np.ndarray]:
    out, pos = [], 0
    while pos < len(buf):
        arr, pos = decode(buf, pos)
        out.append(arr)
    return out
