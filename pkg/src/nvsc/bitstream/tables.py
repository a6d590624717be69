"""Static frequency tables for the range coder, derived from the LSP GMM."""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

FREQ_BITS = 16
FREQ_TOTAL = 1 << FREQ_BITS
INDEX_MIN = -64
INDEX_MAX = 63
N_INDEX_SYMBOLS = INDEX_MAX - INDEX_MIN + 1
ESCAPE = N_INDEX_SYMBOLS  # symbol id of the escape code
ESCAPE_BITS = 16


def quantize_pmf(p: np.ndarray) -> np.ndarray:
    """Integer frequencies (every entry >= 1, total <= 2**16) along the last axis."""
    p = np.asarray(p, dtype=np.float64)
    n = p.shape[-1]
    p = np.clip(p, 0.0, None)
    p = p / p.sum(axis=-1, keepdims=True)
    return (1 + np.floor(p * (FREQ_TOTAL - n))).astype(np.int64)


def cumulative(freqs: np.ndarray) -> np.ndarray:
    f = np.asarray(freqs, dtype=np.int64)
    zero = np.zeros(f.shape[:-1] + (1,), dtype=np.int64)
    return np.concatenate([zero, np.cumsum(f, axis=-1)], axis=-1)


class LspTables:
    """Range-coder tables for one GMM: component choice plus per-dimension lattice indices.

    Lattice index ``j`` of component ``m``, dimension ``d`` gets the Gaussian
    mass of its cell; indices outside [-64, 63] share one escape symbol
    followed by a raw 16-bit field.
    """

    def __init__(self, weights, variances, steps):
        weights = np.asarray(weights, dtype=np.float64)
        sigma = np.sqrt(np.asarray(variances, dtype=np.float64))
        steps = np.asarray(steps, dtype=np.float64)
        self.component_freqs = quantize_pmf(weights)
        self.component_cum = cumulative(self.component_freqs)
        j = np.arange(INDEX_MIN, INDEX_MAX + 1, dtype=np.float64)
        edge = (steps / sigma)[..., None]
        mass = ndtr((j + 0.5) * edge) - ndtr((j - 0.5) * edge)
        escape = np.clip(1.0 - mass.sum(axis=-1, keepdims=True), 0.0, None)
        self.index_freqs = quantize_pmf(np.concatenate([mass, escape], axis=-1))
        self.index_cum = cumulative(self.index_freqs)
        self.component_bits = np.log2(self.component_cum[-1] / self.component_freqs)
        self.index_bits = np.log2(self.index_cum[..., -1:] / self.index_freqs)

    def code_length(self, components: np.ndarray, indices: np.ndarray) -> np.ndarray:
        """Ideal code length in bits of each (component, lattice indices) pair."""
        components = np.asarray(components)
        indices = np.asarray(indices, dtype=np.int64)
        inside = (indices >= INDEX_MIN) & (indices <= INDEX_MAX)
        sym = np.where(inside, indices - INDEX_MIN, ESCAPE)
        dims = np.arange(indices.shape[-1])
        bits = self.index_bits[components[:, None], dims[None, :], sym]
        bits = bits + np.where(inside, 0.0, ESCAPE_BITS)
        return self.component_bits[components] + bits.sum(axis=-1)
