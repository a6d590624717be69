"""Deterministic vocoder decoder: mixed pulse/noise excitation through 1/A(z).

Per band, the excitation is ``sqrt(v) * pulses + sqrt(1 - v) * noise`` after
a linear-phase band-pass filter; the six band filters sum to a pure delay so
a flat voicing profile reproduces the unfiltered source. Pulses have
amplitude ``sqrt(fs / f0)`` and the noise has unit variance, which makes the
excitation unit-RMS before it is scaled by the decoded level.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.signal import firwin, lfilter

from .analysis import FRAME_LENGTH, N_BANDS, SAMPLE_RATE, AudioBuffer, lsp_to_lpc
from .seeding import DEFAULT_SEED, rng_for

BAND_EDGES = (0.0, 500.0, 1000.0, 2000.0, 3000.0, 5000.0, 8000.0)
BAND_TAPS = 129
SUBFRAMES = 4  # 2.5 ms LSP interpolation
CLIP_KNEE = 0.9


def band_filters(edges=BAND_EDGES, taps: int = BAND_TAPS, fs: int = SAMPLE_RATE) -> np.ndarray:
    """Complementary linear-phase band-pass bank, shape ``(bands, taps)``."""
    delta = np.zeros(taps)
    delta[taps // 2] = 1.0
    lows = [np.zeros(taps)]
    lows += [firwin(taps, f, fs=fs) for f in edges[1:-1]]
    lows.append(delta)
    return np.diff(np.array(lows), axis=0)


_BANDS = band_filters()


def soft_clip(x: np.ndarray, knee: float = CLIP_KNEE):
    """Identity below ``knee``; a tanh shoulder above it, bounded by (-1, 1)."""
    mag = np.abs(x)
    over = mag > knee
    y = x.copy()
    y[over] = np.sign(x[over]) * (knee + (1 - knee) * np.tanh((mag[over] - knee) / (1 - knee)))
    return y, int(over.sum())


@dataclass
class SynthState:
    rng: np.random.Generator
    phase: float = 0.0  # pitch phase in radians, [0, 2 pi)
    filter_memory: Optional[np.ndarray] = None
    prev_lsp: Optional[np.ndarray] = None
    pulse_history: np.ndarray = field(default_factory=lambda: np.zeros(BAND_TAPS - 1))
    noise_history: np.ndarray = field(default_factory=lambda: np.zeros(BAND_TAPS - 1))
    clipped: int = 0

    @classmethod
    def initial(cls, seed: int = DEFAULT_SEED) -> "SynthState":
        return cls(rng=rng_for(seed, "excitation"))


def _pulses(f0: float, phase: float, n: int):
    out = np.zeros(n)
    if f0 <= 0:
        return out, phase
    inc = 2 * np.pi * f0 / SAMPLE_RATE
    ph = phase + inc * np.arange(1, n + 1)
    wraps = np.floor(ph / (2 * np.pi))
    prev = np.concatenate([[0.0], wraps[:-1]])
    out[wraps > prev] = np.sqrt(SAMPLE_RATE / f0)
    return out, float(np.mod(ph[-1], 2 * np.pi))


def _band_split(x: np.ndarray, history: np.ndarray):
    full = np.concatenate([history, x])
    bands = np.stack([np.convolve(full, h, mode="valid") for h in _BANDS])
    return bands, full[-(BAND_TAPS - 1):]


def synthesize_frame(frame, state: SynthState):
    """Render 160 samples for one decoded frame (``lsp``/``lpc``, ``s``, ``f0``, ``v``).

    Returns ``(samples, state)``; ``state`` is updated in place.
    """
    n = FRAME_LENGTH
    f0 = float(frame.f0)
    v = np.clip(np.asarray(frame.v, dtype=np.float64), 0.0, 1.0) if f0 > 0 else np.zeros(N_BANDS)
    pulses, state.phase = _pulses(f0, state.phase, n)
    noise = state.rng.standard_normal(n)
    pb, state.pulse_history = _band_split(pulses, state.pulse_history)
    nb, state.noise_history = _band_split(noise, state.noise_history)
    excitation = np.sqrt(v) @ pb + np.sqrt(1.0 - v) @ nb
    excitation *= float(frame.s)

    lsp = np.asarray(getattr(frame, "lsp", None) if getattr(frame, "lsp", None) is not None else [])
    order = len(frame.lpc)
    if state.filter_memory is None or len(state.filter_memory) != order:
        state.filter_memory = np.zeros(order)
        state.prev_lsp = None
    out = np.empty(n)
    sub = n // SUBFRAMES
    for j in range(SUBFRAMES):
        if len(lsp) and state.prev_lsp is not None:
            w = (j + 1) / SUBFRAMES
            a = lsp_to_lpc((1 - w) * state.prev_lsp + w * lsp)
        else:
            a = np.asarray(frame.lpc, dtype=np.float64)
        seg = slice(j * sub, (j + 1) * sub)
        out[seg], state.filter_memory = lfilter([1.0], np.concatenate([[1.0], a]), excitation[seg],
                                                zi=state.filter_memory)
    state.prev_lsp = lsp if len(lsp) else None
    out, clipped = soft_clip(out)
    state.clipped += clipped
    return out, state


def synthesize(frames, seed: int = DEFAULT_SEED):
    """Concatenate :func:`synthesize_frame` over ``frames``; returns ``(samples, clipped_count)``."""
    state = SynthState.initial(seed)
    chunks = [synthesize_frame(f, state)[0] for f in frames]
    samples = np.concatenate(chunks) if chunks else np.zeros(0)
    return samples, state.clipped


def decode_classic(stream, codebook, seed: int = DEFAULT_SEED) -> AudioBuffer:
    """Decode an .nvsc stream (path or bytes) with the classic vocoder."""
    from .bitstream.stream import decode_stream, read_stream
    from .quantize import decode_frames

    if isinstance(stream, (bytes, bytearray)):
        op, qframes = decode_stream(bytes(stream), codebook)
    else:
        op, qframes = read_stream(stream, codebook)
    samples, _ = synthesize(decode_frames(qframes, codebook, op), seed)
    return AudioBuffer(samples)
