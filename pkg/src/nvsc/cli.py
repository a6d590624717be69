"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 data or format error, 4 numerical failure.
Commands print one JSON record per line on stdout.
"""

from __future__ import annotations

import functools
import logging
import math
import sys
from pathlib import Path

import click
import numpy as np

from . import metrics
from .analysis import LspConversionError, UnstableFilterError
from .seeding import DEFAULT_SEED, rng_for

EXIT_DATA = 3
EXIT_NUMERIC = 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (UnstableFilterError, LspConversionError, FloatingPointError) as exc:
            _fail(EXIT_NUMERIC, str(exc))
        except (ValueError, OSError) as exc:
            _fail(EXIT_DATA, str(exc))
    return wrapper


def _emit(record: dict) -> None:
    metrics.emit(record, sys.stdout)


def _wav_files(directory) -> list:
    files = sorted(Path(directory).glob("*.wav"))
    if not files:
        raise ValueError(f"no .wav files in {directory}")
    return files


def _read_corpus(directory) -> list:
    from .wavio import read_wav

    return [read_wav(p) for p in _wav_files(directory)]


op_option = click.option("--rate", "-r", "rate", required=True,
                         type=click.Choice(["5.6", "6.4", "8.0"]), help="Operating point in kb/s.")
seed_option = click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True)
codebook_option = click.option("--codebook", "-c", required=True, type=click.Path(dir_okay=False),
                               help="Codebook file from train-codebooks.")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Very-low-rate speech codec with classic and neural decoders."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command("make-corpus")
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--duration", type=float, default=120.0, show_default=True, help="Total seconds.")
@click.option("--utterance", type=float, default=4.0, show_default=True, help="Seconds per file.")
@seed_option
@handle_errors
def make_corpus(out_dir, duration, utterance, seed):
    """Write a synthetic formant-speech corpus (desk-scale stand-in for recorded speech)."""
    from .synthetic import synth_corpus
    from .wavio import write_wav

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    signals = synth_corpus(duration, seed, utterance)
    for i, x in enumerate(signals):
        write_wav(out / f"utt{i:04d}.wav", x)
    _emit({"command": "make-corpus", "files": len(signals), "seconds": len(signals) * utterance})


@main.command("train-codebooks")
@click.argument("wav_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "-o", required=True, type=click.Path(dir_okay=False))
@click.option("--rate", "-r", "rates", multiple=True, type=click.Choice(["5.6", "6.4", "8.0"]),
              help="Operating points to calibrate (default: all).")
@seed_option
@handle_errors
def train_codebooks_cmd(wav_dir, out, rates, seed):
    """Train LSP GMMs, lattice steps and the voicing VQ from a WAV directory."""
    from .codebook import corpus_features, train_codebooks
    from .gmm import measured_rate
    from .oppoints import get_operating_point

    signals = _read_corpus(wav_dir)
    total = sum(len(s) for s in signals) / 16000.0
    if total < 60.0:
        raise ValueError(f"insufficient data: {total:.1f} s of audio, need at least 60 s")
    cb = train_codebooks(signals, list(rates) or None, seed=seed)
    cb.save(out)
    for op_id, gmm in cb.gmms.items():
        op = get_operating_point(op_id)
        lsp = corpus_features(signals, op.lpc_order)[0]
        _emit({"command": "train-codebooks", "operating_point": op.id, "lsp_bits": measured_rate(gmm, lsp),
               "lsp_budget": op.lsp_bit_budget, "step": float(gmm.steps.flat[0])})


@main.command()
@click.argument("wav", type=click.Path(exists=True, dir_okay=False))
@codebook_option
@op_option
@click.option("--out", "-o", required=True, type=click.Path(dir_okay=False))
@handle_errors
def encode(wav, codebook, rate, out):
    """Encode a 16 kHz mono PCM16 WAV into an .nvsc stream."""
    from .codebook import Codebook
    from .codec import encode_audio
    from .oppoints import get_operating_point
    from .wavio import read_wav

    op = get_operating_point(rate)
    blob, frames, _ = encode_audio(read_wav(wav), Codebook.load(codebook), op)
    Path(out).write_bytes(blob)
    _emit({"command": "encode", "frames": len(frames), "kbps": metrics.measure_bitrate(out),
           "nominal_kbps": op.nominal_rate, "bytes": len(blob)})


@main.command()
@click.argument("stream", type=click.Path(exists=True, dir_okay=False))
@codebook_option
@click.option("--mode", "-m", type=click.Choice(["classic", "neural"]), default="classic", show_default=True)
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), help="Required for neural mode.")
@seed_option
@click.option("--out", "-o", required=True, type=click.Path(dir_okay=False))
@handle_errors
def decode(stream, codebook, mode, checkpoint, seed, out):
    """Decode an .nvsc stream to WAV with the classic vocoder or a trained model."""
    from .codebook import Codebook
    from .codec import decode_classic_bytes, decode_neural_bytes
    from .wavio import write_wav

    blob = Path(stream).read_bytes()
    cb = Codebook.load(codebook)
    record = {"command": "decode", "mode": mode}
    if mode == "classic":
        audio, clipped = decode_classic_bytes(blob, cb, seed)
        record["clipped_samples"] = clipped
    else:
        if checkpoint is None:
            raise click.UsageError("--checkpoint is required for neural decoding")
        from .neural.checkpoint import load_checkpoint

        model, norm, _ = load_checkpoint(checkpoint)
        audio = decode_neural_bytes(blob, cb, model, norm, seed)
    write_wav(out, audio)
    record.update(samples=len(audio), seconds=audio.duration)
    _emit(record)


@main.command("train-model")
@click.argument("wav_dir", type=click.Path(exists=True, file_okay=False))
@codebook_option
@op_option
@click.option("--out", "-o", required=True, type=click.Path(dir_okay=False), help="Checkpoint path.")
@click.option("--hidden", type=int, default=64, show_default=True)
@click.option("--mixtures", type=int, default=10, show_default=True)
@click.option("--batch", type=int, default=4, show_default=True)
@click.option("--seq-len", type=int, default=1600, show_default=True)
@click.option("--lr", type=float, default=2e-4, show_default=True)
@click.option("--steps", type=int, default=1000, show_default=True)
@click.option("--eval-every", type=int, default=None, help="Steps between validations (default: one epoch).")
@click.option("--checkpoint-every", type=int, default=0, help="Steps between checkpoints (0: end only).")
@click.option("--cond-dim", type=click.Choice(["auto", "24", "30"]), default="30", show_default=True,
              help="30 embeds low-rate streams; auto uses the direct dimension.")
@click.option("--resume", type=click.Path(exists=True, dir_okay=False), help="Checkpoint to resume from.")
@click.option("--float64", "use_f64", is_flag=True, help="64-bit arithmetic (exact resume).")
@click.option("--overfit", is_flag=True, help="Train on the first 1 s of the first file only.")
@seed_option
@handle_errors
def train_model(wav_dir, codebook, rate, out, hidden, mixtures, batch, seq_len, lr, steps, eval_every,
                checkpoint_every, cond_dim, resume, use_f64, overfit, seed):
    """Train the neural decoder on decoded conditioning from a WAV directory (TBPTT)."""
    import torch

    from .codebook import Codebook
    from .codec import training_pairs
    from .conditioning import conditioning_dim
    from .neural.checkpoint import load_checkpoint, restore_trainer, save_checkpoint, trainer_config_from
    from .neural.model import ModelConfig, SampleRNN
    from .neural.train import ChunkSampler, Trainer, TrainerConfig, evaluate
    from .oppoints import get_operating_point

    op = get_operating_point(rate)
    cb = Codebook.load(codebook)
    signals = [s.samples for s in _read_corpus(wav_dir)]
    dtype = torch.float64 if use_f64 else torch.float32
    precision = "f8" if use_f64 else "f4"

    if resume:
        model, norm, saved = load_checkpoint(resume, dtype=dtype)
        tcfg = trainer_config_from(saved) or TrainerConfig(batch, seq_len, lr)
    else:
        norm = cb.cond_norm
        dim = conditioning_dim(op.lpc_order) if cond_dim == "auto" else int(cond_dim)
        model = SampleRNN(ModelConfig(hidden=hidden, cond_dim=dim, n_mix=mixtures), seed=seed).to(dtype)
        tcfg = TrainerConfig(batch_size=batch, seq_len=seq_len, lr=lr)
        saved = None

    if overfit:
        signals = [signals[0][:16000]]
        train_set = training_pairs(signals, cb, op, norm, model.config.cond_dim)
        val_set = train_set
    else:
        order = rng_for(seed, "split").permutation(len(signals))
        n_val = max(1, len(signals) // 10) if len(signals) > 1 else 0
        val_idx, train_idx = set(order[:n_val].tolist()), order[n_val:]
        pairs = training_pairs(signals, cb, op, norm, model.config.cond_dim)
        train_set = [pairs[i] for i in train_idx]
        val_set = [pairs[i] for i in sorted(val_idx)] or train_set

    trainer = Trainer(model, tcfg)
    trainer.sampler = ChunkSampler(train_set, tcfg.batch_size, tcfg.seq_len, seed, dtype=dtype)
    restore_trainer(trainer, saved)
    if eval_every is None:
        chunks = sum(len(w) // tcfg.seq_len for w, _ in train_set)
        eval_every = max(1, math.ceil(chunks / tcfg.batch_size))

    initial = evaluate(model, val_set, tcfg.seq_len)
    _emit({"command": "train-model", "step": trainer.step, "val_loss": initial, "lr": trainer.schedule.lr})
    for _ in range(steps):
        loss = trainer.train_step(next(trainer.sampler))
        record = {"step": trainer.step, "loss": loss}
        if trainer.step % eval_every == 0:
            val = evaluate(model, val_set, tcfg.seq_len)
            record.update(val_loss=val, lr=trainer.validate(val))
        _emit(record)
        if checkpoint_every and trainer.step % checkpoint_every == 0:
            save_checkpoint(out, model, norm, trainer, precision)
    final = evaluate(model, val_set, tcfg.seq_len)
    save_checkpoint(out, model, norm, trainer, precision)
    _emit({"command": "train-model", "step": trainer.step, "val_loss": final,
           "initial_val_loss": initial, "ratio": final / initial})


def _parse_lpc(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.replace(",", " ").split()])
    except ValueError as exc:
        raise click.BadParameter(f"cannot parse LPC coefficients {text!r}") from exc


@main.command("metrics")
@click.option("--ref", type=click.Path(exists=True, dir_okay=False), help="Reference WAV.")
@click.option("--test", type=click.Path(exists=True, dir_okay=False), help="Test WAV (SNR against --ref).")
@click.option("--stream", type=click.Path(exists=True, dir_okay=False), help=".nvsc stream (bitrate).")
@click.option("--codebook", "-c", type=click.Path(exists=True, dir_okay=False),
              help="With --stream and --ref: spectral distortion of the decoded LPC.")
@click.option("--lpc-a", help="Space- or comma-separated a_1..a_M.")
@click.option("--lpc-b", help="Space- or comma-separated a_1..a_M.")
@handle_errors
def metrics_cmd(ref, test, stream, codebook, lpc_a, lpc_b):
    """Emit spectral-distortion, SNR and bitrate records."""
    from .wavio import read_wav

    did = False
    if (lpc_a is None) != (lpc_b is None):
        raise click.UsageError("--lpc-a and --lpc-b go together")
    if lpc_a is not None:
        _emit({"metric": "spectral_distortion_db",
               "value": metrics.spectral_distortion(_parse_lpc(lpc_a), _parse_lpc(lpc_b))})
        did = True
    if test is not None:
        if ref is None:
            raise click.UsageError("--test needs --ref")
        r, t = read_wav(ref).samples, read_wav(test).samples
        n = min(len(r), len(t))
        if abs(len(r) - len(t)) >= 160:
            raise ValueError(f"reference and test lengths differ: {len(r)} vs {len(t)} samples")
        _emit({"metric": "snr_db", "value": metrics.snr(r[:n], t[:n])})
        did = True
    if stream is not None:
        _emit({"metric": "bitrate_kbps", "value": metrics.measure_bitrate(stream)})
        did = True
        if codebook is not None and ref is not None:
            from .analysis import AnalysisConfig, analyze
            from .codebook import Codebook
            from .codec import decode_parameters

            op, decoded = decode_parameters(Path(stream).read_bytes(), Codebook.load(codebook))
            frames = analyze(read_wav(ref), AnalysisConfig(lpc_order=op.lpc_order))
            if len(frames) != len(decoded):
                raise ValueError(f"stream has {len(decoded)} frames, reference gives {len(frames)}")
            report = metrics.distortion_report([f.lpc for f in frames], [d.lpc for d in decoded])
            _emit({"metric": "spectral_distortion", **report.record()})
    if not did:
        raise click.UsageError("nothing to measure: give --lpc-a/--lpc-b, --ref/--test or --stream")


if __name__ == "__main__":
    main()
