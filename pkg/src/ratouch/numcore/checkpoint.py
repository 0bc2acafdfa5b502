"""Binary parameter checkpoints.

Layout (little-endian): b"RTCK", version u32, tensor count u32, then per
tensor: name length u32, UTF-8 name, rank u32, extents u64 x rank, float32
payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError

MAGIC = b"RTCK"
VERSION = 1


def save_checkpoint(path, arrays):
    path = Path(path)
    buf = bytearray(MAGIC)
    buf += struct.pack("<II", VERSION, len(arrays))
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        buf += struct.pack("<I", len(raw)) + raw
        buf += struct.pack("<I", arr.ndim)
        buf += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        buf += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    path.write_bytes(bytes(buf))


def load_checkpoint(path):
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise FormatError("bad checkpoint magic", offset=0)
    pos = 4

    def take(fmt, record=None):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise FormatError("truncated checkpoint", offset=pos, record=record)
        out = struct.unpack_from(fmt, data, pos)
        pos += size
        return out

    version, count = take("<II")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    out = {}
    for i in range(count):
        (nlen,) = take("<I", i)
        if pos + nlen > len(data):
            raise FormatError("truncated tensor name", offset=pos, record=i)
        name = data[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = take("<I", i)
        shape = take(f"<{rank}Q", i)
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        if pos + nbytes > len(data):
            raise FormatError(f"truncated payload for {name!r}", offset=pos, record=i)
        out[name] = np.frombuffer(data, dtype="<f4", count=nbytes // 4, offset=pos).reshape(shape).copy()
        pos += nbytes
    return out
