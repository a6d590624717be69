"""Deterministic formant-synthesized speech used as a desk-scale corpus.

Utterances are sequences of vowels, fricatives, stop bursts and pauses
rendered with a glottal pulse source, a cascade of time-varying formant
resonators and shaped noise. Nothing here models a real talker; the goal is
a reproducible signal with speech-like LPC, pitch and voicing statistics.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import lfilter

from .analysis import SAMPLE_RATE

BLOCK = 80  # control-rate block, 5 ms

# F1..F4 targets in Hz for a handful of vowel qualities
VOWELS = np.array([
    [730, 1090, 2440, 3400],
    [270, 2290, 3010, 3700],
    [300, 870, 2240, 3300],
    [530, 1840, 2480, 3500],
    [570, 840, 2410, 3300],
    [660, 1720, 2410, 3400],
    [440, 1020, 2240, 3300],
    [390, 1990, 2550, 3600],
])
BANDWIDTHS = np.array([80.0, 100.0, 140.0, 200.0, 300.0])


def _resonator(freq, bw, fs=SAMPLE_RATE):
    r = np.exp(-np.pi * bw / fs)
    theta = 2 * np.pi * freq / fs
    a = np.array([1.0, -2 * r * np.cos(theta), r * r])
    return a, a.sum()  # unity gain at DC


def _segments(duration, rng):
    """Random sequence of (kind, length_in_blocks) covering ``duration`` seconds."""
    n_blocks = int(np.ceil(duration * SAMPLE_RATE / BLOCK))
    segs = []
    total = 0
    while total < n_blocks:
        u = rng.random()
        if u < 0.55:
            kind, dur = "vowel", rng.uniform(0.08, 0.28)
        elif u < 0.75:
            kind, dur = "fricative", rng.uniform(0.05, 0.15)
        elif u < 0.85:
            kind, dur = "burst", rng.uniform(0.02, 0.04)
        else:
            kind, dur = "pause", rng.uniform(0.05, 0.3)
        length = max(1, int(round(dur * SAMPLE_RATE / BLOCK)))
        segs.append((kind, length))
        total += length
    return segs, n_blocks


def _smooth(track, width):
    if width <= 1:
        return track
    kernel = np.hanning(width + 2)[1:-1]
    kernel /= kernel.sum()
    padded = np.concatenate([np.repeat(track[:1], width), track, np.repeat(track[-1:], width)])
    return np.convolve(padded, kernel, mode="same")[width:-width]


def synth_speech(duration: float, seed: int = 0, level_db: float = -26.0) -> np.ndarray:
    """Render ``duration`` seconds of synthetic speech at 16 kHz, RMS about ``level_db`` dBFS."""
    rng = np.random.default_rng(seed)
    segs, n_blocks = _segments(duration, rng)
    base_f0 = rng.uniform(90.0, 230.0)
    formant_scale = rng.uniform(0.9, 1.15)

    voice_amp = np.zeros(n_blocks)
    noise_amp = np.zeros(n_blocks)
    fric_freq = np.full(n_blocks, 4000.0)
    formants = np.zeros((n_blocks, 4))
    seg_gain = np.zeros(n_blocks)
    pos = 0
    vowel = VOWELS[rng.integers(len(VOWELS))]
    for kind, length in segs:
        sl = slice(pos, min(pos + length, n_blocks))
        if kind == "vowel":
            vowel = VOWELS[rng.integers(len(VOWELS))]
            voice_amp[sl] = 1.0
            noise_amp[sl] = 0.02
            seg_gain[sl] = rng.uniform(0.5, 1.5)
        elif kind == "fricative":
            noise_amp[sl] = rng.uniform(0.3, 0.8)
            voice_amp[sl] = rng.uniform(0.0, 0.4) if rng.random() < 0.3 else 0.0
            fric_freq[sl] = rng.uniform(2500.0, 6500.0)
            seg_gain[sl] = rng.uniform(0.4, 1.0)
        elif kind == "burst":
            noise_amp[sl] = 1.0
            fric_freq[sl] = rng.uniform(1500.0, 5000.0)
            seg_gain[sl] = rng.uniform(0.5, 1.2)
        else:
            seg_gain[sl] = 0.0
        formants[sl] = vowel * formant_scale
        pos += length

    formants = np.stack([_smooth(formants[:, i], 6) for i in range(4)], axis=1)
    voice_amp = _smooth(voice_amp, 3)
    noise_amp = _smooth(noise_amp, 2)
    seg_gain = _smooth(seg_gain, 4)

    # pitch contour: slow random walk around a declining baseline
    walk = np.cumsum(rng.standard_normal(n_blocks)) * 0.01
    walk = _smooth(walk - walk.mean(), 20)
    decl = np.linspace(0.08, -0.08, n_blocks)
    f0_blocks = base_f0 * np.exp(walk + decl)
    f0_blocks = np.clip(f0_blocks, 60.0, 380.0)

    n = n_blocks * BLOCK
    t_block = (np.arange(n) + 0.5) / BLOCK - 0.5
    def up(track):
        return np.interp(t_block, np.arange(n_blocks), track)

    f0 = up(f0_blocks)
    jitter = 1.0 + 0.002 * rng.standard_normal(n)
    phase = np.cumsum(f0 * jitter / SAMPLE_RATE)
    pulses = np.diff(np.floor(phase), prepend=0.0)
    # glottal spectral tilt
    source = lfilter([1.0], [1.0, -1.8, 0.81], pulses) * 0.19 * np.sqrt(f0 / 100.0)
    aspir = rng.standard_normal(n)
    voiced = source * up(voice_amp) + 0.02 * aspir * up(voice_amp)

    out = np.zeros(n)
    zi = [np.zeros(2) for _ in range(5)]
    fric_zi = [np.zeros(2), np.zeros(1)]
    noise = rng.standard_normal(n)
    for b in range(n_blocks):
        sl = slice(b * BLOCK, (b + 1) * BLOCK)
        y = voiced[sl]
        freqs = list(formants[b]) + [4500.0 * formant_scale]
        for i, (f, bw) in enumerate(zip(freqs, BANDWIDTHS)):
            a, g = _resonator(f, bw)
            y, zi[i] = lfilter([g], a, y, zi=zi[i])
        nz = noise[sl] * noise_amp[b]
        a, g = _resonator(fric_freq[b], 0.35 * fric_freq[b])
        nz, fric_zi[0] = lfilter([g], a, nz, zi=fric_zi[0])
        nz, fric_zi[1] = lfilter([1.0, -0.9], [1.0], nz, zi=fric_zi[1])
        out[sl] = y + 0.3 * nz
    out = lfilter([1.0, -0.95], [1.0], out)  # lip radiation
    out *= up(seg_gain)
    out = out[: int(round(duration * SAMPLE_RATE))]
    active = np.abs(out) > 0
    rms = np.sqrt(np.mean(out[active] ** 2)) if np.any(active) else 1.0
    out *= 10 ** (level_db / 20.0) / max(rms, 1e-12)
    out += 10 ** (-70 / 20.0) * rng.standard_normal(len(out))  # room-noise floor
    return np.clip(out, -0.99, 0.99)


def synth_corpus(total_duration: float, seed: int = 0, utterance_duration: float = 4.0) -> list:
    """Several utterances from distinct synthetic talkers, ``total_duration`` seconds overall."""
    n = max(1, int(np.ceil(total_duration / utterance_duration)))
    ss = np.random.SeedSequence(seed)
    return [synth_speech(utterance_duration, seed=int(s.generate_state(1)[0]))
            for s in ss.spawn(n)]


def synth_vowel(duration: float = 1.0, seed: int = 0, level_db: float = -20.0) -> np.ndarray:
    """A noise-free sustained voiced sound with slowly gliding pitch and formants."""
    rng = np.random.default_rng(seed)
    n = int(round(duration * SAMPLE_RATE))
    t = np.arange(n) / SAMPLE_RATE
    f0 = rng.uniform(110.0, 180.0) * (1.0 + 0.05 * np.sin(2 * np.pi * 0.7 * t))
    phase = np.cumsum(f0 / SAMPLE_RATE)
    pulses = np.diff(np.floor(phase), prepend=0.0)
    y = lfilter([1.0], [1.0, -1.8, 0.81], pulses)
    v0, v1 = VOWELS[rng.choice(len(VOWELS), 2, replace=False)]
    out = np.zeros(n)
    zi = [np.zeros(2) for _ in range(4)]
    for b in range(0, n, BLOCK):
        sl = slice(b, min(b + BLOCK, n))
        w = b / max(n - 1, 1)
        seg = y[sl]
        for i in range(4):
            a, g = _resonator((1 - w) * v0[i] + w * v1[i], BANDWIDTHS[i])
            seg, zi[i] = lfilter([g], a, seg, zi=zi[i])
        out[sl] = seg
    out = lfilter([1.0, -0.95], [1.0], out)
    out *= 10 ** (level_db / 20.0) / np.sqrt(np.mean(out**2))
    return out
