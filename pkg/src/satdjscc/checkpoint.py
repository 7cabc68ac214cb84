"""Binary parameter container ("DJSC" format).

Layout, all little-endian: magic b"DJSC", format version u32, then one
record per parameter: name length u32, name bytes (utf-8), rank u32,
dims u32 each, then float32 values in C order. Records run to end of file.
Round-trips are bit-exact.
"""
from __future__ import annotations

import io
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"DJSC"
VERSION = 1
_MAX_NAME = 4096
_MAX_RANK = 32
_MAX_DIM = 2 ** 31


def dumps(parameters):
    """Serialize a name -> array mapping (arrays are cast to float32)."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    for name, values in parameters.items():
        # note: ascontiguousarray would promote 0-d arrays to 1-d
        data = np.asarray(values, dtype="<f4", order="C")
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<I", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<I", data.ndim))
        for dim in data.shape:
            buf.write(struct.pack("<I", dim))
        buf.write(data.tobytes())
    return buf.getvalue()


def loads(blob):
    """Parse a DJSC blob back into an ordered name -> float32 array dict."""
    view = memoryview(blob)
    total = len(view)
    if total < 8:
        raise FormatError("file shorter than the 8-byte header", offset=total)
    if bytes(view[:4]) != MAGIC:
        raise FormatError(f"bad magic {bytes(view[:4])!r}, expected {MAGIC!r}", offset=0)
    (version,) = struct.unpack_from("<I", view, 4)
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}", offset=4)
    offset = 8
    out = {}

    def need(count, what):
        if offset + count > total:
            raise FormatError(f"truncated while reading {what}", offset=offset)

    while offset < total:
        need(4, "name length")
        (name_len,) = struct.unpack_from("<I", view, offset)
        if name_len == 0 or name_len > _MAX_NAME:
            raise FormatError(f"implausible name length {name_len}", offset=offset)
        offset += 4
        need(name_len, "parameter name")
        name = bytes(view[offset:offset + name_len]).decode("utf-8")
        offset += name_len
        need(4, f"rank of {name!r}")
        (rank,) = struct.unpack_from("<I", view, offset)
        if rank > _MAX_RANK:
            raise FormatError(f"implausible rank {rank} for {name!r}", offset=offset)
        offset += 4
        need(4 * rank, f"dims of {name!r}")
        dims = struct.unpack_from(f"<{rank}I", view, offset) if rank else ()
        offset += 4 * rank
        count = 1
        for dim in dims:
            if dim >= _MAX_DIM:
                raise FormatError(f"dimension overflow {dim} in {name!r}", offset=offset)
            count *= dim
        payload = 4 * count
        need(payload, f"values of {name!r}")
        data = np.frombuffer(view, dtype="<f4", count=count, offset=offset)
        offset += payload
        if name in out:
            raise FormatError(f"duplicate parameter {name!r}", offset=offset)
        out[name] = data.reshape(dims).copy()
    return out


def save(parameters, path):
    blob = dumps(parameters)
    with open(path, "wb") as handle:
        handle.write(blob)
    return len(blob)


def load(path):
    with open(path, "rb") as handle:
        return loads(handle.read())


def byte_size(parameters):
    """Exact serialized size without building the blob."""
    size = 8
    for name, values in parameters.items():
        data = np.asarray(values)
        size += 4 + len(name.encode("utf-8")) + 4 + 4 * data.ndim + 4 * data.size
    return size
