"""Discretized mixture of logistics over 16-bit sample bins.

Samples are integers ``k`` in [-32768, 32767] viewed as ``k / 32768``, so the
bin width is ``2 / 65536``. The lowest bin absorbs all mass below its upper
edge and the highest bin all mass above its lower edge.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

QMIN = -32768
QMAX = 32767
N_BINS = 65536
BIN_WIDTH = 2.0 / N_BINS
LOG_SCALE_MIN = -7.0


def split_params(raw: torch.Tensor, n_mix: int):
    """Split a ``(..., 3 * n_mix)`` head output into ``(logits, mu, log_s)``; ``log_s`` is clamped."""
    if raw.shape[-1] != 3 * n_mix:
        raise ValueError(f"expected last dimension {3 * n_mix}, got {raw.shape[-1]}")
    logits, mu, log_s = raw.split(n_mix, dim=-1)
    return logits, mu, torch.clamp(log_s, min=LOG_SCALE_MIN)


def to_bins(x: torch.Tensor) -> torch.Tensor:
    return torch.clamp(torch.round(x * 32768.0), QMIN, QMAX)


def log_bin_mass(mu, log_s, x):
    """Per-component log mass of the bin holding ``x``; ``x`` broadcasts against ``mu``."""
    k = to_bins(x)
    centre = k / 32768.0
    inv_s = torch.exp(-log_s)
    upper = (centre + BIN_WIDTH / 2 - mu) * inv_s
    lower = (centre - BIN_WIDTH / 2 - mu) * inv_s
    # log(sigma(a) - sigma(b)) = log sigma(a) + log sigma(-b) + log(1 - exp(-(a - b)))
    interior = F.logsigmoid(upper) + F.logsigmoid(-lower) + torch.log(-torch.expm1(-BIN_WIDTH * inv_s))
    out = torch.where(k <= QMIN, F.logsigmoid(upper), interior)
    return torch.where(k >= QMAX, F.logsigmoid(-lower), out)


def dml_log_prob(logits, mu, log_s, x):
    """Log probability of the bin holding ``x`` (shape of ``x``) under the mixture."""
    x = x.unsqueeze(-1)
    return torch.logsumexp(F.log_softmax(logits, dim=-1) + log_bin_mass(mu, log_s, x), dim=-1)


def dml_nll(logits, mu, log_s, x):
    return -dml_log_prob(logits, mu, log_s, x)


def all_bin_log_masses(logits, mu, log_s) -> torch.Tensor:
    """Log mass of every one of the 65536 bins for a single parameter set."""
    grid = torch.arange(QMIN, QMAX + 1, dtype=mu.dtype) / 32768.0
    return dml_log_prob(logits.expand(N_BINS, -1), mu.expand(N_BINS, -1),
                        log_s.expand(N_BINS, -1), grid)


def dml_sample(logits, mu, log_s, rng: np.random.Generator) -> int:
    """Draw one 16-bit sample: categorical component, inverse-CDF logistic, round and clamp."""
    logits = np.asarray(logits, dtype=np.float64)
    w = np.exp(logits - logits.max())
    cdf = np.cumsum(w / w.sum())
    u_comp, u = rng.random(2)
    m = min(int(np.searchsorted(cdf, u_comp, side="right")), len(cdf) - 1)
    u = min(max(u, 1e-12), 1.0 - 1e-12)
    scale = np.exp(max(float(log_s[m]), LOG_SCALE_MIN))
    x = float(mu[m]) + scale * (np.log(u) - np.log1p(-u))
    return int(np.clip(np.round(x * 32768.0), QMIN, QMAX))
