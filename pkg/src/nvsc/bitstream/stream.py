"""The .nvsc file: a 10-byte header followed by one range-coded payload.

Header (little-endian): ``b"NVSC"``, format version (u8, = 1), operating
point code (u8: 0 = 5.6, 1 = 6.4, 2 = 8.0 kb/s), frame count (u32).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from ..oppoints import BY_CODE, OperatingPoint, get_operating_point
from .frame import CodingTables, pack_frame, unpack_frame
from .rangecoder import BitstreamError, RangeDecoder, RangeEncoder

MAGIC = b"NVSC"
VERSION = 1
HEADER = struct.Struct("<4sBBI")
HEADER_SIZE = HEADER.size


class StreamFormatError(ValueError):
    pass


@dataclass(frozen=True)
class StreamHeader:
    op: OperatingPoint
    frame_count: int
    version: int = VERSION

    def pack(self) -> bytes:
        return HEADER.pack(MAGIC, self.version, self.op.code, self.frame_count)


def read_header(blob: bytes) -> StreamHeader:
    if len(blob) < HEADER_SIZE:
        raise StreamFormatError("truncated stream header")
    magic, version, code, count = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise StreamFormatError(f"not an .nvsc stream (magic {magic!r})")
    if version != VERSION:
        raise StreamFormatError(f"unsupported stream version {version}")
    if code not in BY_CODE:
        raise StreamFormatError(f"unknown operating point code {code}")
    return StreamHeader(BY_CODE[code], count, version)


def encode_stream(frames, op, codebook) -> bytes:
    op = get_operating_point(op)
    tables = CodingTables.for_gmm(codebook.gmm(op))
    enc = RangeEncoder()
    for q in frames:
        pack_frame(q, op, enc, tables)
    return StreamHeader(op, len(frames)).pack() + enc.finish()


def decode_stream(blob: bytes, codebook):
    """Returns ``(operating point, list of QuantizedFrame)``."""
    header = read_header(blob)
    tables = CodingTables.for_gmm(codebook.gmm(header.op))
    dec = RangeDecoder(blob[HEADER_SIZE:])
    frames = [unpack_frame(dec, header.op, tables) for _ in range(header.frame_count)]
    if not dec.exhausted:
        raise BitstreamError("payload longer than the declared frame count")
    return header.op, frames


def write_stream(frames, op, path, codebook) -> int:
    blob = encode_stream(frames, op, codebook)
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


def read_stream(path, codebook):
    with open(path, "rb") as fh:
        return decode_stream(fh.read(), codebook)
