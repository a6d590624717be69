"""Encoder operating points (bit allocations per 10 ms frame)."""

from __future__ import annotations

from dataclasses import dataclass

FRAME_RATE = 100


@dataclass(frozen=True)
class OperatingPoint:
    id: str
    code: int
    nominal_rate: float  # kb/s
    lpc_order: int
    level_bits: int  # payload only; one mode bit is added
    pitch_bits: int = 9
    voicing_bits: int = 9
    lsp_bit_budget: int = 0

    @property
    def fixed_bits(self) -> int:
        return (1 + self.level_bits) + (1 + self.pitch_bits) + self.voicing_bits

    @property
    def frame_bits(self) -> float:
        return self.nominal_rate * 1000.0 / FRAME_RATE


R5_6 = OperatingPoint("R5_6", 0, 5.6, 16, 8, lsp_bit_budget=28)
R6_4 = OperatingPoint("R6_4", 1, 6.4, 16, 8, lsp_bit_budget=36)
R8_0 = OperatingPoint("R8_0", 2, 8.0, 22, 9, lsp_bit_budget=51)

OPERATING_POINTS = {op.id: op for op in (R5_6, R6_4, R8_0)}
BY_CODE = {op.code: op for op in OPERATING_POINTS.values()}
_ALIASES = {"5.6": R5_6, "6.4": R6_4, "8.0": R8_0, "8": R8_0}


def get_operating_point(key) -> OperatingPoint:
    """Look up an operating point by id (``"R8_0"``), rate string (``"8.0"``) or code."""
    if isinstance(key, OperatingPoint):
        return key
    if isinstance(key, int):
        try:
            return BY_CODE[key]
        except KeyError:
            raise ValueError(f"unknown operating point code {key}") from None
    key = str(key)
    if key in OPERATING_POINTS:
        return OPERATING_POINTS[key]
    if key in _ALIASES:
        return _ALIASES[key]
    raise ValueError(f"unknown operating point {key!r}; choose one of 5.6, 6.4, 8.0")
