"""End-to-end helpers tying analysis, quantization, the bitstream and both decoders together."""

from __future__ import annotations

import numpy as np

from .analysis import FRAME_LENGTH, AnalysisConfig, AudioBuffer, analyze
from .bitstream.stream import decode_stream, encode_stream
from .conditioning import ConditioningNorm, conditioning_sequence
from .oppoints import OperatingPoint, get_operating_point
from .quantize import decode_frames, encode_frames
from .seeding import DEFAULT_SEED
from .synthesis import synthesize


def as_audio(x) -> AudioBuffer:
    return x if isinstance(x, AudioBuffer) else AudioBuffer(np.asarray(x, dtype=np.float64))


def encode_audio(audio, codebook, op, config: AnalysisConfig | None = None):
    """Analyze and encode; returns ``(stream bytes, analysis frames, locally decoded frames)``."""
    op = op if isinstance(op, OperatingPoint) else get_operating_point(op)
    if config is None:
        config = AnalysisConfig(lpc_order=op.lpc_order)
    elif config.lpc_order != op.lpc_order:
        raise ValueError(f"analysis order {config.lpc_order} does not match operating point {op.id}")
    frames = analyze(as_audio(audio), config)
    qframes, decoded = encode_frames(frames, codebook, op)
    return encode_stream(qframes, op, codebook), frames, decoded


def decode_parameters(blob: bytes, codebook):
    """Parse a stream and dequantize it; returns ``(op, decoded frames)``."""
    op, qframes = decode_stream(blob, codebook)
    return op, decode_frames(qframes, codebook, op)


def decode_classic_bytes(blob: bytes, codebook, seed: int = DEFAULT_SEED):
    """Classic vocoder output as ``(AudioBuffer, clipped sample count)``."""
    _, frames = decode_parameters(blob, codebook)
    samples, clipped = synthesize(frames, seed)
    return AudioBuffer(samples), clipped


def decode_neural_bytes(blob: bytes, codebook, model, cond_norm: ConditioningNorm,
                        seed: int = DEFAULT_SEED) -> AudioBuffer:
    """Neural decoder output; low-rate streams are embedded when the model expects dimension 30."""
    from .neural.model import generate

    _, frames = decode_parameters(blob, codebook)
    cond = conditioning_sequence(frames, cond_norm, model.config.cond_dim)
    return AudioBuffer(generate(model, cond, seed))


def training_pairs(signals, codebook, op, cond_norm: ConditioningNorm, target_dim: int):
    """``(waveform, conditioning)`` pairs from decoded (quantized) parameters of each signal.

    Waveforms are zero-padded to a whole number of frames.
    """
    op = op if isinstance(op, OperatingPoint) else get_operating_point(op)
    pairs = []
    for x in signals:
        x = np.asarray(x.samples if isinstance(x, AudioBuffer) else x, dtype=np.float64)
        _, _, decoded = encode_audio(x, codebook, op)
        cond = conditioning_sequence(decoded, cond_norm, target_dim)
        wave = np.zeros(FRAME_LENGTH * len(decoded))
        wave[: len(x)] = x
        pairs.append((wave, cond))
    return pairs
