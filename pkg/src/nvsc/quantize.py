"""Frame-level quantization: FrameParams <-> QuantizedFrame <-> DecodedFrame."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import FrameParams, lpc_to_lsp, lsp_to_lpc
from .gmm import LspCode, lsp_dequantize, lsp_quantize
from .oppoints import OperatingPoint
from .scalar import (PredictiveCoderState, db_to_level, level_decode, level_encode, level_to_db,
                     pitch_decode, pitch_encode)
from .vq import voicing_decode, voicing_encode


@dataclass(frozen=True)
class QuantizedFrame:
    lsp_code: LspCode
    level_code: tuple  # (mode bit, payload)
    pitch_code: tuple  # (mode bit, payload)
    voicing_index: int

    def check(self, op: OperatingPoint) -> None:
        for name, (mode, payload), bits in (("level", self.level_code, op.level_bits),
                                            ("pitch", self.pitch_code, op.pitch_bits)):
            if mode not in (0, 1) or not 0 <= payload < (1 << bits):
                raise ValueError(f"{name} code {mode, payload} exceeds its {1 + bits}-bit field")
        if not 0 <= self.voicing_index < (1 << op.voicing_bits):
            raise ValueError(f"voicing index {self.voicing_index} exceeds its field")
        if len(self.lsp_code.indices) != op.lpc_order:
            raise ValueError("LSP code dimension does not match the operating point")


@dataclass
class DecodedFrame:
    """Decoder-side view of one frame: everything derives from the bitstream."""

    lsp: np.ndarray
    lpc: np.ndarray
    level_db: float
    f0: float
    v: np.ndarray

    @property
    def s(self) -> float:
        return db_to_level(self.level_db)

    @property
    def order(self) -> int:
        return len(self.lpc)

    def to_frame_params(self) -> FrameParams:
        return FrameParams(lpc=self.lpc.copy(), s=self.s, f0=self.f0, v=self.v.copy())


class FrameEncoder:
    """Sequential encoder for one stream (carries the predictive state)."""

    def __init__(self, codebook, op: OperatingPoint):
        self.op = op
        self.gmm = codebook.gmm(op)
        self.vq = codebook.vq
        self.state = PredictiveCoderState()
        self.decoder = FrameDecoder(codebook, op)

    def encode(self, frame: FrameParams):
        """Quantize one frame; returns ``(QuantizedFrame, local DecodedFrame)``."""
        if frame.order != self.op.lpc_order:
            raise ValueError(f"frame has LPC order {frame.order}, operating point needs {self.op.lpc_order}")
        lsp_code = lsp_quantize(lpc_to_lsp(frame.lpc), self.gmm)
        level_code, st = level_encode(level_to_db(frame.s), self.state, self.op)
        pitch_code, st = pitch_encode(frame.f0, st, self.op)
        self.state = st
        q = QuantizedFrame(lsp_code, level_code, pitch_code, voicing_encode(frame.v, self.vq))
        return q, self.decoder.decode(q)


class FrameDecoder:
    def __init__(self, codebook, op: OperatingPoint):
        self.op = op
        self.gmm = codebook.gmm(op)
        self.vq = codebook.vq
        self.state = PredictiveCoderState()

    def decode(self, q: QuantizedFrame) -> DecodedFrame:
        lsp = lsp_dequantize(q.lsp_code, self.gmm)
        level_db, st = level_decode(q.level_code, self.state, self.op)
        f0, st = pitch_decode(q.pitch_code, st, self.op)
        self.state = st
        return DecodedFrame(lsp=lsp, lpc=lsp_to_lpc(lsp), level_db=level_db, f0=f0,
                            v=voicing_decode(q.voicing_index, self.vq))


def encode_frames(frames, codebook, op: OperatingPoint):
    enc = FrameEncoder(codebook, op)
    pairs = [enc.encode(f) for f in frames]
    return [p[0] for p in pairs], [p[1] for p in pairs]


def decode_frames(qframes, codebook, op: OperatingPoint):
    dec = FrameDecoder(codebook, op)
    return [dec.decode(q) for q in qframes]
