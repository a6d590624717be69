"""32-bit carry-less range coder (Subbotin-style renormalization).

Frequencies are integers with a per-table total of at most 2**16. The
decoder consumes exactly the bytes the encoder produced; reading past the
end or decoding a cumulative count outside the table raises
:class:`BitstreamError`.
"""

from __future__ import annotations

from bisect import bisect_right

TOP = 1 << 24
BOT = 1 << 16
MASK = 0xFFFFFFFF
MAX_TOTAL = 1 << 16


class BitstreamError(ValueError):
    def __init__(self, detail: str = ""):
        super().__init__("bitstream decode failure" + (f": {detail}" if detail else ""))


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = MASK
        self.out = bytearray()
        self.symbols = 0

    def encode(self, cum: int, freq: int, total: int) -> None:
        if not (0 < freq and cum + freq <= total <= MAX_TOTAL):
            raise ValueError(f"invalid symbol interval cum={cum} freq={freq} total={total}")
        r = self.range // total
        self.low = (self.low + cum * r) & MASK
        self.range = r * freq
        self.symbols += 1
        while True:
            if (self.low ^ (self.low + self.range)) >= TOP:
                if self.range >= BOT:
                    break
                self.range = -self.low & (BOT - 1)
            self.out.append(self.low >> 24)
            self.low = (self.low << 8) & MASK
            self.range = (self.range << 8) & MASK

    def encode_symbol(self, symbol: int, cum_table) -> None:
        self.encode(cum_table[symbol], cum_table[symbol + 1] - cum_table[symbol], cum_table[-1])

    def encode_bits(self, value: int, nbits: int) -> None:
        """Raw fixed-width field (``nbits`` <= 16) as a uniform symbol."""
        if not 0 <= value < (1 << nbits):
            raise ValueError(f"value {value} does not fit in {nbits} bits")
        self.encode(value, 1, 1 << nbits)

    def finish(self) -> bytes:
        if self.symbols:
            for _ in range(4):
                self.out.append(self.low >> 24)
                self.low = (self.low << 8) & MASK
        return bytes(self.out)


class RangeDecoder:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.low = 0
        self.range = MASK
        self.code = 0
        self.started = False

    def _byte(self) -> int:
        if self.pos >= len(self.data):
            raise BitstreamError("unexpected end of payload")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def _start(self):
        for _ in range(4):
            self.code = (self.code << 8) | self._byte()
        self.started = True

    def decode_freq(self, total: int) -> int:
        if not self.started:
            self._start()
        self.range //= total
        value = ((self.code - self.low) & MASK) // self.range
        if value >= total:
            raise BitstreamError("invalid symbol")
        return value

    def consume(self, cum: int, freq: int) -> None:
        self.low = (self.low + cum * self.range) & MASK
        self.range *= freq
        while True:
            if (self.low ^ (self.low + self.range)) >= TOP:
                if self.range >= BOT:
                    break
                self.range = -self.low & (BOT - 1)
            self.code = ((self.code << 8) | self._byte()) & MASK
            self.low = (self.low << 8) & MASK
            self.range = (self.range << 8) & MASK

    def decode_symbol(self, cum_table) -> int:
        value = self.decode_freq(cum_table[-1])
        symbol = bisect_right(cum_table, value) - 1
        self.consume(cum_table[symbol], cum_table[symbol + 1] - cum_table[symbol])
        return symbol

    def decode_bits(self, nbits: int) -> int:
        value = self.decode_freq(1 << nbits)
        self.consume(value, 1)
        return value

    @property
    def exhausted(self) -> bool:
        return self.pos == len(self.data)


def encode_symbols(symbols, tables) -> bytes:
    """Encode ``symbols[i]`` with cumulative table ``tables[i]`` (or one shared table)."""
    enc = RangeEncoder()
    shared = tables and not isinstance(tables[0], (list, tuple))
    for i, s in enumerate(symbols):
        enc.encode_symbol(s, tables if shared else tables[i])
    return enc.finish()


def decode_symbols(data: bytes, tables, count: int) -> list:
    dec = RangeDecoder(data)
    shared = tables and not isinstance(tables[0], (list, tuple))
    out = [dec.decode_symbol(tables if shared else tables[i]) for i in range(count)]
    if not dec.exhausted:
        raise BitstreamError("trailing bytes after last symbol")
    return out
