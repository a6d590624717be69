"""Hybrid predictive / memoryless scalar coding of level and pitch.

Each coder sends one mode bit: 1 selects the fine predictive quantizer
around the previous reconstruction, 0 the coarse memoryless one. Encoder and
decoder advance identical :class:`PredictiveCoderState` values.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .oppoints import OperatingPoint
from .warp import unwarp_pitch, warp_pitch

LEVEL_MIN_DB = -70.0
LEVEL_PRED_STEP = 0.25
LEVEL_FLOOR = 1e-9

PITCH_MIN = 50.0
PITCH_MAX = 400.0
PITCH_W_MIN = warp_pitch(PITCH_MIN)
PITCH_W_MAX = warp_pitch(PITCH_MAX)
PITCH_FINE_RATIO = 8


@dataclass(frozen=True)
class PredictiveCoderState:
    level_db: Optional[float] = None  # None after reset
    pitch_w: Optional[float] = None  # None after reset or an unvoiced frame

    @property
    def reset(self) -> bool:
        return self.level_db is None


def level_to_db(s: float) -> float:
    return 20.0 * np.log10(max(float(s), LEVEL_FLOOR))


def db_to_level(db: float) -> float:
    return float(10.0 ** (db / 20.0))


def level_memoryless_step(op: OperatingPoint) -> float:
    return 0.2 if op.level_bits == 9 else 0.4


def _pred_limit(bits: int) -> int:
    return (1 << (bits - 1)) - 1


def level_encode(s_db: float, state: PredictiveCoderState, op: OperatingPoint):
    """Returns ``((mode, payload), new_state)``; ``-inf`` (silence) saturates like any very low level."""
    if np.isnan(s_db):
        raise ValueError("level is NaN")
    s_db = max(float(s_db), level_to_db(0.0))
    bits = op.level_bits
    if state.level_db is not None:
        q = int(np.round((s_db - state.level_db) / LEVEL_PRED_STEP))
        if abs(q) <= _pred_limit(bits):
            rec = state.level_db + q * LEVEL_PRED_STEP
            return (1, q + (1 << (bits - 1))), replace(state, level_db=rec)
    step = level_memoryless_step(op)
    idx = int(np.clip(np.round((s_db - LEVEL_MIN_DB) / step), 0, (1 << bits) - 1))
    rec = LEVEL_MIN_DB + idx * step
    return (0, idx), replace(state, level_db=rec)


def level_decode(code, state: PredictiveCoderState, op: OperatingPoint):
    """Returns ``(level_db, new_state)``."""
    mode, payload = code
    bits = op.level_bits
    if mode:
        if state.level_db is None:
            raise ValueError("bitstream decode failure: predictive level without history")
        rec = state.level_db + (payload - (1 << (bits - 1))) * LEVEL_PRED_STEP
    else:
        rec = LEVEL_MIN_DB + payload * level_memoryless_step(op)
    return rec, replace(state, level_db=rec)


def pitch_coarse_step(op: OperatingPoint) -> float:
    # top payload value is reserved for unvoiced
    return (PITCH_W_MAX - PITCH_W_MIN) / ((1 << op.pitch_bits) - 2)


def pitch_unvoiced_payload(op: OperatingPoint) -> int:
    return (1 << op.pitch_bits) - 1


def pitch_encode(f0: float, state: PredictiveCoderState, op: OperatingPoint):
    bits = op.pitch_bits
    if f0 <= 0:
        return (0, pitch_unvoiced_payload(op)), replace(state, pitch_w=None)
    fw = float(np.clip(warp_pitch(f0), PITCH_W_MIN, PITCH_W_MAX))
    coarse = pitch_coarse_step(op)
    if state.pitch_w is not None:
        fine = coarse / PITCH_FINE_RATIO
        q = int(np.round((fw - state.pitch_w) / fine))
        rec = state.pitch_w + q * fine
        if abs(q) <= _pred_limit(bits) and PITCH_W_MIN <= rec <= PITCH_W_MAX:
            return (1, q + (1 << (bits - 1))), replace(state, pitch_w=rec)
    idx = int(np.clip(np.round((fw - PITCH_W_MIN) / coarse), 0, pitch_unvoiced_payload(op) - 1))
    rec = PITCH_W_MIN + idx * coarse
    return (0, idx), replace(state, pitch_w=rec)


def pitch_decode(code, state: PredictiveCoderState, op: OperatingPoint):
    """Returns ``(f0_hz, new_state)``; unvoiced decodes to exactly 0."""
    mode, payload = code
    bits = op.pitch_bits
    coarse = pitch_coarse_step(op)
    if mode:
        if state.pitch_w is None:
            raise ValueError("bitstream decode failure: predictive pitch without history")
        rec = state.pitch_w + (payload - (1 << (bits - 1))) * coarse / PITCH_FINE_RATIO
    elif payload == pitch_unvoiced_payload(op):
        return 0.0, replace(state, pitch_w=None)
    else:
        rec = PITCH_W_MIN + payload * coarse
    f0 = float(np.clip(unwarp_pitch(rec), PITCH_MIN, PITCH_MAX))
    return f0, replace(state, pitch_w=rec)
