"""Binary parameter container.

Layout (all integers little-endian)::

    b"LFPC"  u16 version  u32 count
    count x { u16 name_len, name (UTF-8), u8 ndim, ndim x u32 dim,
              prod(dims) x float64 }
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"LFPC"
VERSION = 1


class ParamFormatError(ValueError):
    pass


def pack_params(params: dict[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<HI", VERSION, len(params))]
    for name, value in params.items():
        raw_name = name.encode("utf-8")
        value = np.asarray(value, dtype="<f8")
        chunks.append(struct.pack("<H", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack("<B", value.ndim))
        chunks.append(struct.pack(f"<{value.ndim}I", *value.shape))
        chunks.append(np.ascontiguousarray(value).tobytes())
    return b"".join(chunks)


def unpack_params(data: bytes) -> dict[str, np.ndarray]:
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise ParamFormatError("parameter container truncated")
        out = view[pos:pos + n]
        pos += n
        return out

    if bytes(take(4)) != MAGIC:
        raise ParamFormatError("not a parameter container")
    version, count = struct.unpack("<HI", take(6))
    if version != VERSION:
        raise ParamFormatError(f"unsupported container version {version}")
    params = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(bytes(take(8 * size)), dtype="<f8").reshape(shape)
        params[name] = arr.astype(np.float64)
    if pos != len(view):
        raise ParamFormatError("trailing bytes after parameter container")
    return params
