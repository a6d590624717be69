"""Truncated-BPTT training with Adam, element-wise gradient clipping and a plateau schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional

import numpy as np
import torch

from ..seeding import DEFAULT_SEED, rng_for
from .model import FRAME, ModelState, SampleRNN


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainerConfig:
    batch_size: int = 4
    seq_len: int = 1600
    lr: float = 2e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    clip: float = 1.0
    decay: float = 0.3
    patience: int = 3
    lr_floor: float = 1e-6

    def __post_init__(self):
        if self.seq_len % FRAME or self.seq_len <= 0:
            raise ValueError(f"sequence length must be a positive multiple of {FRAME}")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


@dataclass
class ScheduleState:
    lr: float
    best: float = math.inf
    bad_evals: int = 0


def lr_schedule_update(state: ScheduleState, val_loss: float, config: TrainerConfig) -> ScheduleState:
    """Multiply the rate by ``decay`` after ``patience`` evaluations without a new best, never below the floor."""
    if val_loss < state.best:
        return ScheduleState(state.lr, val_loss, 0)
    bad = state.bad_evals + 1
    if bad >= config.patience:
        return ScheduleState(max(state.lr * config.decay, config.lr_floor), state.best, 0)
    return ScheduleState(state.lr, state.best, bad)


class Batch(NamedTuple):
    x: torch.Tensor  # (B, L)
    cond: torch.Tensor  # (B, L / 160, C)
    reset: torch.Tensor  # (B,) bool, True where a lane starts a new utterance


class ChunkSampler:
    """Walks ``batch_size`` lanes through utterances chunk by chunk, so states carry over.

    ``utterances`` is a list of ``(waveform, conditioning)`` pairs with
    ``len(waveform) == 160 * len(conditioning)``; utterances shorter than one
    chunk are dropped and trailing partial chunks are ignored. With
    ``stagger``, lane ``i`` first enters its utterance at chunk
    ``i * n_chunks // batch_size`` (zero state) so that lanes sharing an
    utterance do not see identical data; later utterances start at chunk 0.
    """

    def __init__(self, utterances, batch_size: int, seq_len: int, seed: int = DEFAULT_SEED,
                 dtype=torch.float32, stagger: bool = True):
        self.seq_len = seq_len
        self.frames = seq_len // FRAME
        self.utts = []
        for wave, cond in utterances:
            wave, cond = np.asarray(wave), np.asarray(cond)
            if len(wave) != FRAME * len(cond):
                raise ValueError(f"length mismatch: {len(wave)} samples for {len(cond)} frames")
            if len(wave) >= seq_len:
                self.utts.append((wave, cond))
        if not self.utts:
            raise ValueError(f"no utterance is at least {seq_len} samples long")
        self.batch_size = batch_size
        self.dtype = dtype
        self.rng = rng_for(seed, "chunk-sampler")
        self.order: list = []
        self.lanes = [self._next_utterance() for _ in range(batch_size)]
        if stagger:
            for i, lane in enumerate(self.lanes):
                lane[1] = i * self._n_chunks(lane[0]) // batch_size
        self._fresh = [True] * batch_size

    def _n_chunks(self, u: int) -> int:
        return len(self.utts[u][0]) // self.seq_len

    def _next_utterance(self):
        if not self.order:
            self.order = list(self.rng.permutation(len(self.utts)))
        return [self.order.pop(), 0]

    def get_state(self) -> dict:
        return {"lanes": [list(map(int, l)) for l in self.lanes], "order": [int(u) for u in self.order],
                "fresh": list(self._fresh), "rng": self.rng.bit_generator.state}

    def set_state(self, state: dict) -> None:
        self.lanes = [list(l) for l in state["lanes"]]
        self.order = list(state["order"])
        self._fresh = list(state["fresh"])
        self.rng.bit_generator.state = state["rng"]

    def __iter__(self) -> Iterator[Batch]:
        return self

    def __next__(self) -> Batch:
        xs, cs, reset = [], [], []
        for i, lane in enumerate(self.lanes):
            wave, cond = self.utts[lane[0]]
            if lane[1] >= self._n_chunks(lane[0]):
                lane[:] = self._next_utterance()
                wave, cond = self.utts[lane[0]]
            reset.append(lane[1] == 0 or self._fresh[i])
            self._fresh[i] = False
            c = lane[1]
            xs.append(wave[c * self.seq_len : (c + 1) * self.seq_len])
            cs.append(cond[c * self.frames : (c + 1) * self.frames])
            lane[1] += 1
        return Batch(torch.as_tensor(np.stack(xs), dtype=self.dtype),
                     torch.as_tensor(np.stack(cs), dtype=self.dtype),
                     torch.as_tensor(reset))


@dataclass
class Trainer:
    model: SampleRNN
    config: TrainerConfig = field(default_factory=TrainerConfig)
    state: Optional[ModelState] = None
    step: int = 0
    sampler: Optional[ChunkSampler] = None

    def __post_init__(self):
        c = self.config
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=c.lr, betas=tuple(c.betas), eps=c.eps)
        self.schedule = ScheduleState(lr=c.lr)

    def _carry(self, batch: Batch) -> ModelState:
        B = batch.x.shape[0]
        if self.state is None or self.state.h4.shape[0] != B:
            return self.model.initial_state(B)
        return self.state.masked(~batch.reset)

    def apply_gradients(self) -> None:
        """Clip every gradient element to [-clip, clip] and take one Adam step."""
        torch.nn.utils.clip_grad_value_(self.model.parameters(), self.config.clip)
        self.optimizer.step()

    def train_step(self, batch: Batch) -> float:
        """One TBPTT step; returns the mean NLL (nats per sample) of the batch."""
        self.model.train()
        self.optimizer.zero_grad(set_to_none=True)
        nll, new_state = self.model(batch.x, batch.cond, self._carry(batch))
        loss = nll.mean()
        if not torch.isfinite(loss):
            raise TrainingDivergedError("training diverged: non-finite loss")
        loss.backward()
        self.apply_gradients()
        self.state = new_state.detach()
        self.step += 1
        return float(loss.detach())

    def set_lr(self, lr: float) -> None:
        for group in self.optimizer.param_groups:
            group["lr"] = lr

    def validate(self, val_loss: float) -> float:
        """Feed a validation loss to the plateau schedule; returns the learning rate in force."""
        self.schedule = lr_schedule_update(self.schedule, val_loss, self.config)
        self.set_lr(self.schedule.lr)
        return self.schedule.lr


@torch.no_grad()
def evaluate(model: SampleRNN, utterances, seq_len: int = 1600) -> float:
    """Mean NLL over whole utterances, processed in stateful chunks of ``seq_len``."""
    model.eval()
    total, count = 0.0, 0
    for wave, cond in utterances:
        n = (len(wave) // seq_len) * seq_len
        if n == 0:
            continue
        state = None
        frames = seq_len // FRAME
        for c in range(n // seq_len):
            x = torch.as_tensor(wave[c * seq_len : (c + 1) * seq_len], dtype=model.dtype).unsqueeze(0)
            h = torch.as_tensor(cond[c * frames : (c + 1) * frames], dtype=model.dtype).unsqueeze(0)
            nll, state = model(x, h, state)
            total += float(nll.sum())
            count += nll.numel()
    if count == 0:
        raise ValueError("no validation data")
    return total / count


def train(model: SampleRNN, train_utts, val_utts=None, config: TrainerConfig = TrainerConfig(),
          n_steps: int = 1000, eval_every: int = 100, seed: int = DEFAULT_SEED,
          trainer: Optional[Trainer] = None, log=None) -> Trainer:
    """Run ``n_steps`` TBPTT steps, evaluating and updating the schedule every ``eval_every`` steps."""
    trainer = trainer or Trainer(model, config)
    if trainer.sampler is None:
        trainer.sampler = ChunkSampler(train_utts, config.batch_size, config.seq_len, seed, dtype=model.dtype)
    for _ in range(n_steps):
        loss = trainer.train_step(next(trainer.sampler))
        record = {"step": trainer.step, "loss": loss}
        if val_utts and eval_every and trainer.step % eval_every == 0:
            val = evaluate(model, val_utts, config.seq_len)
            record.update(val_loss=val, lr=trainer.validate(val))
        if log is not None:
            log(record)
    return trainer
