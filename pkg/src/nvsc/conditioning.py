"""Conditioning vectors for the neural decoder, including the embedded layout.

Layout: ``[reflection coefficients (M slots), f0, level, v(1..6)]``. The
embedded layout pads a 16-coefficient reflection block to 22 slots with zeros
so that every operating point yields a 30-dimensional vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import FRAME_LENGTH, lpc_to_reflection
from .scalar import level_to_db

HIGH_RATE_ORDER = 22
LOW_RATE_ORDER = 16
N_SCALARS = 8  # f0, level, six voicing values


@dataclass(frozen=True)
class ConditioningNorm:
    """Corpus statistics used to standardize the f0 (Hz) and level (dB) slots."""

    f0_mean: float = 0.0
    f0_std: float = 1.0
    level_mean: float = 0.0
    level_std: float = 1.0

    def as_array(self) -> np.ndarray:
        return np.array([self.f0_mean, self.f0_std, self.level_mean, self.level_std])

    @classmethod
    def from_array(cls, arr) -> "ConditioningNorm":
        return cls(*(float(x) for x in np.asarray(arr, dtype=np.float64)))

    @classmethod
    def fit(cls, f0, level_db) -> "ConditioningNorm":
        f0 = np.asarray(f0, dtype=np.float64)
        level_db = np.asarray(level_db, dtype=np.float64)
        return cls(float(f0.mean()), float(max(f0.std(), 1e-6)),
                   float(level_db.mean()), float(max(level_db.std(), 1e-6)))


def conditioning_dim(order: int) -> int:
    return order + N_SCALARS


def _level_db(frame) -> float:
    # decoded frames carry level_db; unquantized FrameParams carry the linear s
    level = getattr(frame, "level_db", None)
    return level_to_db(frame.s) if level is None else float(level)


def _scalars(frame, norm: ConditioningNorm) -> np.ndarray:
    return np.concatenate([
        [(frame.f0 - norm.f0_mean) / norm.f0_std, (_level_db(frame) - norm.level_mean) / norm.level_std],
        np.asarray(frame.v, dtype=np.float64),
    ])


def build_conditioning(frame, norm: ConditioningNorm = ConditioningNorm()) -> np.ndarray:
    """Direct construction: dimension M + 8 (24 for M = 16, 30 for M = 22).

    ``frame`` is a decoded frame (``lpc``, ``f0``, ``level_db``, ``v``) or a
    :class:`FrameParams`, whose level is converted to dB.
    """
    lpc = np.asarray(frame.lpc, dtype=np.float64)
    values = [lpc, [frame.f0, _level_db(frame)], np.asarray(frame.v, dtype=np.float64)]
    if not all(np.all(np.isfinite(v)) for v in values):
        raise ValueError("non-finite decoded parameters")
    return np.concatenate([lpc_to_reflection(lpc), _scalars(frame, norm)])


def embed_conditioning(frame, norm: ConditioningNorm = ConditioningNorm()) -> np.ndarray:
    """Embed a 16th-order (5.6 / 6.4 kb/s) frame into the 30-dimensional high-rate layout."""
    if len(frame.lpc) == HIGH_RATE_ORDER:
        raise ValueError("already high-rate")
    if len(frame.lpc) != LOW_RATE_ORDER:
        raise ValueError(f"cannot embed LPC order {len(frame.lpc)}")
    direct = build_conditioning(frame, norm)
    pad = np.zeros(HIGH_RATE_ORDER - LOW_RATE_ORDER)
    return np.concatenate([direct[:LOW_RATE_ORDER], pad, direct[LOW_RATE_ORDER:]])


def drop_embedding_padding(vec) -> np.ndarray:
    """Inverse projection of :func:`embed_conditioning`: the direct 24-dim vector."""
    vec = np.asarray(vec)
    return np.concatenate([vec[:LOW_RATE_ORDER], vec[HIGH_RATE_ORDER:]])


def conditioning_sequence(frames, norm: ConditioningNorm = ConditioningNorm(),
                          target_dim: int | None = None) -> np.ndarray:
    """Stack per-frame vectors, embedding low-rate frames when ``target_dim`` is 30."""
    if not frames:
        return np.zeros((0, target_dim or 0))
    order = len(frames[0].lpc)
    dim = conditioning_dim(order)
    if target_dim is None or target_dim == dim:
        build = build_conditioning
    elif target_dim == conditioning_dim(HIGH_RATE_ORDER) and order == LOW_RATE_ORDER:
        build = embed_conditioning
    else:
        raise ValueError(f"conditioning dimension mismatch: stream gives {dim}, model expects {target_dim}")
    return np.stack([build(f, norm) for f in frames])


def upsample_conditioning_sequence(vectors, total_samples: int) -> np.ndarray:
    """Frame index associated with every sample (zero-order hold over 160 samples)."""
    n_frames = len(vectors)
    if total_samples != FRAME_LENGTH * n_frames:
        raise ValueError(
            f"length mismatch: {n_frames} frames need {FRAME_LENGTH * n_frames} samples, got {total_samples}"
        )
    return np.arange(total_samples) // FRAME_LENGTH
