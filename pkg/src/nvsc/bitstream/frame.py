"""Bit-exact layout of one coded frame inside the range-coded payload.

Field order: level mode bit, level payload, pitch mode bit, pitch payload,
voicing index (uniform raw fields), then the GMM component and one lattice
index per LSP dimension coded with the GMM-derived tables. Lattice indices
outside [-64, 63] are sent as an escape symbol plus a raw 16-bit field
holding ``index + 32768``.
"""

from __future__ import annotations

from weakref import WeakKeyDictionary

from ..gmm import LspCode
from ..oppoints import OperatingPoint
from ..quantize import QuantizedFrame
from .rangecoder import BitstreamError, RangeDecoder, RangeEncoder
from .tables import ESCAPE, ESCAPE_BITS, INDEX_MAX, INDEX_MIN

ESCAPE_OFFSET = 1 << (ESCAPE_BITS - 1)


class CodingTables:
    """Python-list views of :class:`LspTables` for fast per-symbol lookup."""

    def __init__(self, lsp_tables):
        self.component = lsp_tables.component_cum.tolist()
        self.index = [[row.tolist() for row in comp] for comp in lsp_tables.index_cum]

    @classmethod
    def for_gmm(cls, gmm) -> "CodingTables":
        tables = _CACHE.get(gmm)
        if tables is None:
            tables = _CACHE[gmm] = cls(gmm.tables)
        return tables


_CACHE: WeakKeyDictionary = WeakKeyDictionary()


def pack_frame(q: QuantizedFrame, op: OperatingPoint, enc: RangeEncoder, tables: CodingTables) -> None:
    q.check(op)
    enc.encode_bits(q.level_code[0], 1)
    enc.encode_bits(q.level_code[1], op.level_bits)
    enc.encode_bits(q.pitch_code[0], 1)
    enc.encode_bits(q.pitch_code[1], op.pitch_bits)
    enc.encode_bits(q.voicing_index, op.voicing_bits)
    m = q.lsp_code.component
    if not 0 <= m < len(tables.component) - 1:
        raise ValueError(f"GMM component {m} out of range")
    enc.encode_symbol(m, tables.component)
    for d, j in enumerate(q.lsp_code.indices):
        cum = tables.index[m][d]
        if INDEX_MIN <= j <= INDEX_MAX:
            enc.encode_symbol(j - INDEX_MIN, cum)
        else:
            if not -ESCAPE_OFFSET <= j < ESCAPE_OFFSET:
                raise ValueError(f"lattice index {j} exceeds the 16-bit escape field")
            enc.encode_symbol(ESCAPE, cum)
            enc.encode_bits(j + ESCAPE_OFFSET, ESCAPE_BITS)


def unpack_frame(dec: RangeDecoder, op: OperatingPoint, tables: CodingTables) -> QuantizedFrame:
    level = (dec.decode_bits(1), dec.decode_bits(op.level_bits))
    pitch = (dec.decode_bits(1), dec.decode_bits(op.pitch_bits))
    voicing = dec.decode_bits(op.voicing_bits)
    m = dec.decode_symbol(tables.component)
    indices = []
    for d in range(op.lpc_order):
        sym = dec.decode_symbol(tables.index[m][d])
        if sym == ESCAPE:
            indices.append(dec.decode_bits(ESCAPE_BITS) - ESCAPE_OFFSET)
        elif sym > ESCAPE:
            raise BitstreamError("invalid lattice symbol")
        else:
            indices.append(sym + INDEX_MIN)
    return QuantizedFrame(LspCode(m, tuple(indices)), level, pitch, voicing)
