"""Model checkpoints: named parameter blocks, model config and conditioning constants.

Parameters are stored as little-endian float32 by default; ``precision="f8"``
keeps float64 models exact. Optimizer moments and schedule state may be
included so that training can resume.
"""

from __future__ import annotations

import numpy as np
import torch

from .. import container
from ..conditioning import ConditioningNorm
from .model import ModelConfig, ModelState, SampleRNN

MAGIC = b"NVCK"
VERSION = 1


def save_checkpoint(path, model: SampleRNN, cond_norm: ConditioningNorm = ConditioningNorm(),
                    trainer=None, precision: str = "f4") -> None:
    if precision not in ("f4", "f8"):
        raise ValueError("precision must be 'f4' or 'f8'")
    dtype = np.float32 if precision == "f4" else np.float64
    sections = {
        "config": model.config.to_json(),
        "cond_norm": cond_norm.as_array(),
    }
    for name, p in model.state_dict().items():
        sections[f"param/{name}"] = p.detach().cpu().numpy().astype(dtype)
    if trainer is not None:
        names = dict((id(p), n) for n, p in model.named_parameters())
        for p, st in trainer.optimizer.state.items():
            for key in ("exp_avg", "exp_avg_sq"):
                sections[f"adam/{names[id(p)]}/{key}"] = st[key].detach().cpu().numpy().astype(np.float64)
        steps = {names[id(p)]: int(st["step"]) for p, st in trainer.optimizer.state.items()}
        sections["trainer"] = {
            "step": trainer.step,
            "lr": trainer.schedule.lr,
            "best": None if not np.isfinite(trainer.schedule.best) else trainer.schedule.best,
            "bad_evals": trainer.schedule.bad_evals,
            "adam_steps": steps,
            "config": {k: list(v) if isinstance(v, tuple) else v
                       for k, v in trainer.config.__dict__.items()},
        }
        if trainer.state is not None:
            for key, t in trainer.state._asdict().items():
                sections[f"tbptt/{key}"] = t.detach().cpu().numpy().astype(np.float64)
        if trainer.sampler is not None:
            sections["sampler"] = trainer.sampler.get_state()
    container.save(path, MAGIC, VERSION, sections)


def load_checkpoint(path, dtype=None):
    """Returns ``(model, cond_norm, trainer_sections)``; the last is None when absent.

    The model is float32 for ``f4`` checkpoints and float64 for ``f8`` ones
    unless ``dtype`` overrides it.
    """
    _, sections = container.load(path, MAGIC, (VERSION,))
    try:
        config = ModelConfig.from_json(sections["config"])
        norm = ConditioningNorm.from_array(sections["cond_norm"])
    except (KeyError, TypeError) as exc:
        raise container.ContainerError(f"checkpoint is missing required sections: {exc}") from exc
    params = {k[len("param/"):]: v for k, v in sections.items() if k.startswith("param/")}
    if dtype is None:
        dtype = torch.float64 if any(v.dtype == np.float64 for v in params.values()) else torch.float32
    model = SampleRNN(config).to(dtype)
    expected = set(model.state_dict())
    if set(params) != expected:
        missing = sorted(expected - set(params))
        extra = sorted(set(params) - expected)
        raise container.ContainerError(f"checkpoint parameter mismatch (missing {missing}, unexpected {extra})")
    state = {}
    for k, v in params.items():
        ref = model.state_dict()[k]
        if tuple(v.shape) != tuple(ref.shape):
            raise container.ContainerError(f"parameter {k} has shape {v.shape}, expected {tuple(ref.shape)}")
        state[k] = torch.as_tensor(v, dtype=dtype)
    model.load_state_dict(state)
    trainer = None
    if "trainer" in sections:
        trainer = {"meta": sections["trainer"],
                   "adam": {k[len("adam/"):]: v for k, v in sections.items() if k.startswith("adam/")},
                   "tbptt": {k[len("tbptt/"):]: v for k, v in sections.items() if k.startswith("tbptt/")},
                   "sampler": sections.get("sampler")}
    return model, norm, trainer


def trainer_config_from(saved):
    """The :class:`TrainerConfig` stored with a checkpoint, or None."""
    from .train import TrainerConfig

    if saved is None or "config" not in saved["meta"]:
        return None
    # JSON turns tuples into lists
    return TrainerConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in saved["meta"]["config"].items()})


def restore_trainer(trainer, saved) -> None:
    """Load optimizer moments, schedule, carried TBPTT state and sampler position.

    Attach the sampler to ``trainer`` before calling so its position can be restored.
    """
    if saved is None:
        return
    meta = saved["meta"]
    params = dict(trainer.model.named_parameters())
    for name, p in params.items():
        key = f"{name}/exp_avg"
        if key not in saved["adam"]:
            continue
        trainer.optimizer.state[p] = {
            "step": torch.tensor(float(meta["adam_steps"][name])),
            "exp_avg": torch.as_tensor(saved["adam"][key], dtype=p.dtype),
            "exp_avg_sq": torch.as_tensor(saved["adam"][f"{name}/exp_avg_sq"], dtype=p.dtype),
        }
    trainer.step = int(meta["step"])
    trainer.schedule.lr = float(meta["lr"])
    trainer.schedule.best = float("inf") if meta["best"] is None else float(meta["best"])
    trainer.schedule.bad_evals = int(meta["bad_evals"])
    trainer.set_lr(trainer.schedule.lr)
    if saved["tbptt"]:
        dtype = trainer.model.dtype
        trainer.state = ModelState(*(torch.as_tensor(saved["tbptt"][k], dtype=dtype) for k in ModelState._fields))
    if saved["sampler"] is not None and trainer.sampler is not None:
        trainer.sampler.set_state(saved["sampler"])
