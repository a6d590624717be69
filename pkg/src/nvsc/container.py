"""Versioned binary container of named sections with a CRC-32 trailer.

Layout (all integers little-endian)::

    magic[4] version:u8 n_sections:u32
    repeated n_sections times:
        name_len:u16 name[name_len] kind:u8 ndim:u8 dims:u32[ndim] nbytes:u64 data[nbytes]
    crc32:u32   # over every preceding byte

``kind`` is 0 for float64, 1 for float32, 2 for int64 arrays and 3 for a
UTF-8 JSON document (``ndim`` = 0).
"""

from __future__ import annotations

import io
import json
import struct
import zlib

import numpy as np

KIND_F8, KIND_F4, KIND_I8, KIND_JSON = 0, 1, 2, 3
_DTYPES = {KIND_F8: "<f8", KIND_F4: "<f4", KIND_I8: "<i8"}


class ContainerError(ValueError):
    pass


def _kind_of(value):
    if isinstance(value, (dict, list, str)):
        return KIND_JSON
    arr = np.asarray(value)
    if arr.dtype == np.float32:
        return KIND_F4
    if arr.dtype.kind in "iub":
        return KIND_I8
    return KIND_F8


def dumps(magic: bytes, version: int, sections: dict) -> bytes:
    if len(magic) != 4:
        raise ValueError("magic must be 4 bytes")
    buf = io.BytesIO()
    buf.write(magic)
    buf.write(struct.pack("<BI", version, len(sections)))
    for name, value in sections.items():
        raw_name = name.encode("utf-8")
        kind = _kind_of(value)
        if kind == KIND_JSON:
            data = json.dumps(value, sort_keys=True).encode("utf-8")
            dims = ()
        else:
            arr = np.ascontiguousarray(np.asarray(value).astype(_DTYPES[kind]))
            data = arr.tobytes()
            dims = arr.shape
        buf.write(struct.pack("<H", len(raw_name)))
        buf.write(raw_name)
        buf.write(struct.pack("<BB", kind, len(dims)))
        buf.write(struct.pack(f"<{len(dims)}I", *dims))
        buf.write(struct.pack("<Q", len(data)))
        buf.write(data)
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def loads(blob: bytes, magic: bytes, versions=(1,)):
    """Parse a container; returns ``(version, sections)``."""
    if len(blob) < 13:
        raise ContainerError("truncated container")
    if blob[:4] != magic:
        raise ContainerError(f"bad magic {blob[:4]!r}, expected {magic!r}")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise ContainerError("checksum mismatch (file corrupted or truncated)")
    version, count = struct.unpack_from("<BI", body, 4)
    if version not in versions:
        raise ContainerError(f"unsupported container version {version}")
    pos = 9
    sections = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", body, pos)
            pos += 2
            name = body[pos : pos + name_len].decode("utf-8")
            pos += name_len
            kind, ndim = struct.unpack_from("<BB", body, pos)
            pos += 2
            dims = struct.unpack_from(f"<{ndim}I", body, pos)
            pos += 4 * ndim
            (nbytes,) = struct.unpack_from("<Q", body, pos)
            pos += 8
            data = body[pos : pos + nbytes]
            if len(data) != nbytes:
                raise ContainerError("truncated container section")
            pos += nbytes
            if kind == KIND_JSON:
                sections[name] = json.loads(data.decode("utf-8"))
            elif kind in _DTYPES:
                sections[name] = np.frombuffer(data, dtype=_DTYPES[kind]).reshape(dims).copy()
            else:
                raise ContainerError(f"unknown section kind {kind}")
    except struct.error as exc:
        raise ContainerError("truncated container") from exc
    if pos != len(body):
        raise ContainerError("trailing bytes after last section")
    return version, sections


def save(path, magic: bytes, version: int, sections: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(magic, version, sections))


def load(path, magic: bytes, versions=(1,)):
    with open(path, "rb") as fh:
        return loads(fh.read(), magic, versions)
