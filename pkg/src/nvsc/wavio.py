"""16 kHz mono PCM16 WAV input and output (stdlib ``wave``)."""

from __future__ import annotations

import wave

import numpy as np

from .analysis import SAMPLE_RATE, AudioBuffer


class WavFormatError(ValueError):
    pass


def read_wav(path) -> AudioBuffer:
    """Read PCM16 little-endian mono 16 kHz; samples are scaled by 1/32768."""
    try:
        with wave.open(str(path), "rb") as w:
            channels, width, rate = w.getnchannels(), w.getsampwidth(), w.getframerate()
            if w.getcomptype() != "NONE":
                raise WavFormatError(f"{path}: compressed WAV ({w.getcomptype()}) is not supported")
            if width != 2:
                raise WavFormatError(f"{path}: expected 16-bit samples, got {8 * width}-bit")
            if channels != 1:
                raise WavFormatError(f"{path}: expected mono, got {channels} channels")
            if rate != SAMPLE_RATE:
                raise WavFormatError(f"{path}: expected {SAMPLE_RATE} Hz, got {rate} Hz")
            raw = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as exc:
        raise WavFormatError(f"{path}: not a readable PCM WAV file ({exc})") from exc
    return AudioBuffer(np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0)


def to_pcm16(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    return np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")


def write_wav(path, samples) -> None:
    if isinstance(samples, AudioBuffer):
        samples = samples.samples
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(SAMPLE_RATE)
        w.writeframes(to_pcm16(samples).tobytes())
