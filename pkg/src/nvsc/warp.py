"""Warped domains used before uniform and vector quantization."""

import numpy as np

PITCH_WARP_C = 500.0
VOICING_CLAMP = 1.0 - 1e-6


def warp_pitch(f0, c: float = PITCH_WARP_C):
    f0 = np.asarray(f0, dtype=np.float64)
    if np.any(f0 < 0):
        raise ValueError("pitch must be non-negative")
    out = c * f0 / (c + f0)
    return float(out) if out.ndim == 0 else out


def unwarp_pitch(fw, c: float = PITCH_WARP_C):
    fw = np.asarray(fw, dtype=np.float64)
    if np.any(fw >= c) or np.any(fw < 0):
        raise ValueError("warp out of range")
    out = c * fw / (c - fw)
    return float(out) if out.ndim == 0 else out


def warp_voicing(v) -> np.ndarray:
    """log((1 - v) / (1 + v)) per component, after clamping v to [0, 1 - 1e-6]."""
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, VOICING_CLAMP)
    return np.log((1.0 - v) / (1.0 + v))


def unwarp_voicing(vw) -> np.ndarray:
    vw = np.asarray(vw, dtype=np.float64)
    # (1 - e^w) / (1 + e^w) == -tanh(w / 2)
    return np.clip(-np.tanh(0.5 * vw), 0.0, 1.0)
