"""Four-tier conditional SampleRNN.

Tiers 4, 3 and 2 are GRUs stepping every 160, 16 and 2 samples. Each tier
sums a linear projection of its previous waveform frame, a projection of the
frame's conditioning vector and (below the top) the upsampled output of the
tier above, runs one GRU step and upsamples with a transposed convolution
whose kernel equals its stride. Tier 1 is an MLP predicting the parameters of
a discretized logistic mixture for every sample.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..seeding import DEFAULT_SEED, derive_seed, rng_for
from .dml import dml_log_prob, dml_sample, split_params

FRAME = 160


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 64
    cond_dim: int = 30
    n_mix: int = 10
    frame_sizes: tuple = (2, 2, 16, 160)  # FS(1)..FS(4)
    ratios: tuple = (2, 8, 10)  # upsampling in tiers 2, 3, 4

    def __post_init__(self):
        object.__setattr__(self, "frame_sizes", tuple(int(v) for v in self.frame_sizes))
        object.__setattr__(self, "ratios", tuple(int(v) for v in self.ratios))
        if min(self.hidden, self.cond_dim, self.n_mix, *self.frame_sizes, *self.ratios) < 1:
            raise ValueError("all model sizes must be >= 1")
        fs1, fs2, fs3, fs4 = self.frame_sizes
        r2, r3, r4 = self.ratios
        if fs4 != FRAME or r2 != fs2 or r3 * fs2 != fs3 or r4 * fs3 != fs4:
            raise ValueError(f"inconsistent frame sizes {self.frame_sizes} and ratios {self.ratios}")
        if math.prod(self.ratios) != fs4:
            raise ValueError("upsampling ratios must multiply to FS(4): tier 2 upsamples to sample rate")

    def to_json(self) -> dict:
        d = asdict(self)
        d["frame_sizes"] = list(self.frame_sizes)
        d["ratios"] = list(self.ratios)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def gru_step(weight_ih, weight_hh, bias_ih, bias_hh, x, h):
    """One GRU update in the PyTorch gate layout (reset, update, candidate).

    ``r = sigma(W_ir x + b_ir + W_hr h + b_hr)``,
    ``z = sigma(W_iz x + b_iz + W_hz h + b_hz)``,
    ``n = tanh(W_in x + b_in + r * (W_hn h + b_hn))``,
    ``h' = (1 - z) * n + z * h``.
    """
    gi = F.linear(x, weight_ih, bias_ih)
    gh = F.linear(h, weight_hh, bias_hh)
    i_r, i_z, i_n = gi.chunk(3, dim=-1)
    h_r, h_z, h_n = gh.chunk(3, dim=-1)
    r = torch.sigmoid(i_r + h_r)
    z = torch.sigmoid(i_z + h_z)
    n = torch.tanh(i_n + r * h_n)
    return (1 - z) * n + z * h


def upsample_learned(weight, bias, x, ratio: int):
    """Transposed convolution with kernel = stride = ``ratio``.

    ``x`` is ``(batch, channels, T)``; ``weight`` is ``(channels, out, ratio)``.
    Returns ``(batch, out, T * ratio)``.
    """
    if weight.shape[-1] != ratio:
        raise ValueError(f"kernel size {weight.shape[-1]} does not match ratio {ratio}")
    return F.conv_transpose1d(x, weight, bias, stride=ratio)


class FrameTier(nn.Module):
    def __init__(self, frame_size, ratio, hidden, cond_dim, has_upper):
        super().__init__()
        self.frame_size = frame_size
        self.ratio = ratio
        self.has_upper = has_upper
        self.wave = nn.Linear(frame_size, hidden)
        self.cond = nn.Linear(cond_dim, hidden, bias=False)
        self.gru = nn.GRU(hidden, hidden, batch_first=True)
        self.up = nn.ConvTranspose1d(hidden, hidden, ratio, stride=ratio)

    def _inputs(self, frames, cond, upper):
        if frames.shape[-1] != self.frame_size:
            raise ValueError(f"tier expects frames of {self.frame_size} samples, got {frames.shape[-1]}")
        u = self.wave(frames) + self.cond(cond)
        if self.has_upper:
            if upper is None or upper.shape != u.shape:
                raise ValueError("upper-tier input shape mismatch")
            u = u + upper
        elif upper is not None:
            raise ValueError("top tier takes no upper-tier input")
        return u

    def forward(self, frames, cond, upper, h0):
        """``frames`` (B, T, FS), ``cond`` (B, T, C), ``upper`` (B, T, H) or None.

        Returns upsampled outputs ``(B, T * ratio, H)`` and the final hidden state ``(B, H)``.
        """
        out, h = self.gru(self._inputs(frames, cond, upper), h0.unsqueeze(0).contiguous())
        up = self.up(out.transpose(1, 2)).transpose(1, 2)
        return up, h.squeeze(0)

    def step(self, frame, cond_proj, upper, h):
        """Single step for generation; ``cond_proj`` is the precomputed conditioning projection."""
        u = self.wave(frame) + cond_proj
        if upper is not None:
            u = u + upper
        g = self.gru
        h = gru_step(g.weight_ih_l0, g.weight_hh_l0, g.bias_ih_l0, g.bias_hh_l0, u, h)
        up = upsample_learned(self.up.weight, self.up.bias, h.unsqueeze(-1), self.ratio)
        return up.transpose(-1, -2), h


class SampleMLP(nn.Module):
    def __init__(self, fs1, hidden, cond_dim, n_mix):
        super().__init__()
        self.prev = nn.Linear(fs1, hidden)
        self.cond = nn.Linear(cond_dim, hidden, bias=False)
        self.fc1 = nn.Linear(hidden, hidden)
        self.fc2 = nn.Linear(hidden, hidden)
        self.out = nn.Linear(hidden, 3 * n_mix)

    def forward(self, prev, upper, cond_proj):
        z = self.prev(prev) + upper + cond_proj
        return self.out(torch.tanh(self.fc2(torch.tanh(self.fc1(z)))))


class ModelState(NamedTuple):
    h4: torch.Tensor
    h3: torch.Tensor
    h2: torch.Tensor
    history: torch.Tensor  # last FS(4) samples

    def detach(self) -> "ModelState":
        return ModelState(*(t.detach() for t in self))

    def masked(self, keep: torch.Tensor) -> "ModelState":
        """Zero the rows where ``keep`` is False (start of a new utterance)."""
        k = keep.to(self.h4.dtype).unsqueeze(-1)
        return ModelState(*(t * k for t in self))


class SampleRNN(nn.Module):
    def __init__(self, config: ModelConfig = ModelConfig(), seed: int = DEFAULT_SEED):
        super().__init__()
        self.config = config
        fs1, fs2, fs3, fs4 = config.frame_sizes
        r2, r3, r4 = config.ratios
        H, C = config.hidden, config.cond_dim
        self.tier4 = FrameTier(fs4, r4, H, C, has_upper=False)
        self.tier3 = FrameTier(fs3, r3, H, C, has_upper=True)
        self.tier2 = FrameTier(fs2, r2, H, C, has_upper=True)
        self.mlp = SampleMLP(fs1, H, C, config.n_mix)
        self.reset_parameters(seed)

    def reset_parameters(self, seed: int = DEFAULT_SEED) -> None:
        """Uniform in +-sqrt(1/fan_in) for every weight and bias, from a seeded generator."""
        gen = torch.Generator().manual_seed(derive_seed(seed, "model-init"))
        with torch.no_grad():
            for name, p in self.named_parameters():
                fan_in = self._fan_in(name, p)
                bound = math.sqrt(1.0 / fan_in)
                p.copy_(torch.rand(p.shape, generator=gen, dtype=torch.float64) * 2 * bound - bound)

    def _fan_in(self, name, p):
        module_name, _, pname = name.rpartition(".")
        module = self.get_submodule(module_name)
        if isinstance(module, nn.GRU):
            return module.input_size if "_ih_" in pname else module.hidden_size
        if isinstance(module, nn.ConvTranspose1d):
            return module.in_channels
        return module.in_features

    @property
    def dtype(self):
        return self.mlp.out.weight.dtype

    def initial_state(self, batch: int) -> ModelState:
        H = self.config.hidden
        z = torch.zeros(batch, H, dtype=self.dtype)
        return ModelState(z, z.clone(), z.clone(), torch.zeros(batch, FRAME, dtype=self.dtype))

    def forward(self, x, cond, state: Optional[ModelState] = None):
        """Teacher-forced per-sample NLL.

        ``x`` is ``(B, L)`` with ``L`` a multiple of 160 and ``cond`` is ``(B, L / 160, C)``.
        Returns ``(nll (B, L), new state)``.
        """
        fs1, fs2, fs3, fs4 = self.config.frame_sizes
        B, L = x.shape
        if L % fs4:
            raise ValueError(f"waveform length {L} is not a multiple of {fs4}")
        n_frames = L // fs4
        if cond.shape[:2] != (B, n_frames) or cond.shape[2] != self.config.cond_dim:
            raise ValueError(f"conditioning shape {tuple(cond.shape)} does not match "
                             f"({B}, {n_frames}, {self.config.cond_dim})")
        if state is None:
            state = self.initial_state(B)
        xp = torch.cat([state.history, x], dim=1)
        off = fs4

        frames4 = xp[:, off - fs4 : off - fs4 + L].reshape(B, -1, fs4)
        up4, h4 = self.tier4(frames4, cond, None, state.h4)
        frames3 = xp[:, off - fs3 : off - fs3 + L].reshape(B, -1, fs3)
        up3, h3 = self.tier3(frames3, cond.repeat_interleave(fs4 // fs3, dim=1), up4, state.h3)
        frames2 = xp[:, off - fs2 : off - fs2 + L].reshape(B, -1, fs2)
        up2, h2 = self.tier2(frames2, cond.repeat_interleave(fs4 // fs2, dim=1), up3, state.h2)

        prev = xp[:, off - fs1 : off + L - 1].unfold(1, fs1, 1)
        cond_s = self.mlp.cond(cond).repeat_interleave(fs4, dim=1)
        raw = self.mlp(prev, up2, cond_s)
        logits, mu, log_s = split_params(raw, self.config.n_mix)
        nll = -dml_log_prob(logits, mu, log_s, x)
        return nll, ModelState(h4, h3, h2, xp[:, -fs4:])


def forward_nll(model: SampleRNN, waveform, conditioning) -> dict:
    """Mean teacher-forced NLL of one utterance, in nats and bits per sample."""
    x = torch.as_tensor(np.asarray(waveform), dtype=model.dtype).reshape(1, -1)
    c = torch.as_tensor(np.asarray(conditioning), dtype=model.dtype).unsqueeze(0)
    if x.shape[1] != c.shape[1] * FRAME:
        raise ValueError(f"length mismatch: {x.shape[1]} samples for {c.shape[1]} frames")
    with torch.no_grad():
        nll, _ = model(x, c)
    mean = float(nll.mean())
    return {"nll": mean, "bits_per_sample": mean / math.log(2), "per_sample": nll[0].numpy()}


@torch.no_grad()
def generate(model: SampleRNN, conditioning, seed: int = DEFAULT_SEED, return_log_probs: bool = False):
    """Autoregressively render ``160 * n`` samples for ``n`` conditioning frames."""
    cfg = model.config
    fs1, fs2, fs3, fs4 = cfg.frame_sizes
    cond = torch.as_tensor(np.asarray(conditioning), dtype=model.dtype).reshape(-1, cfg.cond_dim)
    n = cond.shape[0]
    rng = rng_for(seed, "dml-sampling")
    proj4, proj3, proj2, proj1 = (m.cond(cond) for m in (model.tier4, model.tier3, model.tier2, model.mlp))
    state = model.initial_state(1)
    h4, h3, h2 = state.h4[0], state.h3[0], state.h2[0]
    buf = torch.zeros(fs4 + n * fs4, dtype=model.dtype)
    out = np.zeros(n * fs4, dtype=np.int64)
    log_probs = np.zeros(n * fs4) if return_log_probs else None
    pos = fs4  # index in buf of the next sample
    for t in range(n):
        up4, h4 = model.tier4.step(buf[pos - fs4 : pos], proj4[t], None, h4)
        for j3 in range(cfg.ratios[2]):
            up3, h3 = model.tier3.step(buf[pos - fs3 : pos], proj3[t], up4[j3], h3)
            for j2 in range(cfg.ratios[1]):
                up2, h2 = model.tier2.step(buf[pos - fs2 : pos], proj2[t], up3[j2], h2)
                for j1 in range(cfg.ratios[0]):
                    raw = model.mlp(buf[pos - fs1 : pos], up2[j1], proj1[t])
                    logits, mu, log_s = split_params(raw, cfg.n_mix)
                    k = dml_sample(logits.numpy(), mu.numpy(), log_s.numpy(), rng)
                    buf[pos] = k / 32768.0
                    if log_probs is not None:
                        log_probs[pos - fs4] = float(dml_log_prob(logits, mu, log_s, buf[pos]))
                    out[pos - fs4] = k
                    pos += 1
    samples = out / 32768.0
    return (samples, log_probs) if return_log_probs else samples
