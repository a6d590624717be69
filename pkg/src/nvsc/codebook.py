"""Trained quantizer tables: per-operating-point LSP GMMs, the voicing VQ and
the conditioning standardization constants, stored in one container file."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import container
from .analysis import AnalysisConfig, AudioBuffer, analyze, lpc_to_lsp
from .conditioning import ConditioningNorm
from .gmm import GmmModel, calibrate_steps, gmm_train, measured_rate
from .oppoints import OPERATING_POINTS, OperatingPoint, get_operating_point
from .scalar import level_to_db
from .seeding import DEFAULT_SEED, derive_seed
from .vq import VqCodebook, train_voicing_vq

log = logging.getLogger(__name__)

MAGIC = b"NVCB"
VERSION = 1
GMM_COMPONENTS = 8


@dataclass
class Codebook:
    gmms: dict  # operating point id -> GmmModel
    vq: VqCodebook
    cond_norm: ConditioningNorm

    def gmm(self, op) -> GmmModel:
        op = get_operating_point(op)
        try:
            return self.gmms[op.id]
        except KeyError:
            raise ValueError(f"codebook has no tables for operating point {op.id}") from None

    def to_sections(self) -> dict:
        sections = {"meta": {"operating_points": sorted(self.gmms)}}
        for op_id in sorted(self.gmms):
            g = self.gmms[op_id]
            sections[f"gmm/{op_id}/weights"] = g.weights
            sections[f"gmm/{op_id}/means"] = g.means
            sections[f"gmm/{op_id}/variances"] = g.variances
            sections[f"gmm/{op_id}/steps"] = g.steps
            sections[f"gmm/{op_id}/lambda"] = np.array([g.lam])
        sections["vq/codewords"] = self.vq.codewords
        sections["cond_norm"] = self.cond_norm.as_array()
        return sections

    def save(self, path) -> None:
        container.save(path, MAGIC, VERSION, self.to_sections())

    @classmethod
    def load(cls, path) -> "Codebook":
        _, sec = container.load(path, MAGIC)
        gmms = {}
        for op_id in sec["meta"]["operating_points"]:
            gmms[op_id] = GmmModel(sec[f"gmm/{op_id}/weights"], sec[f"gmm/{op_id}/means"],
                                   sec[f"gmm/{op_id}/variances"], sec[f"gmm/{op_id}/steps"],
                                   float(sec[f"gmm/{op_id}/lambda"][0]))
        return cls(gmms, VqCodebook(sec["vq/codewords"]), ConditioningNorm.from_array(sec["cond_norm"]))


def corpus_features(signals, order: int):
    """Analyze every signal at LPC order ``order``; returns (lsp, f0, level_db, voicing) arrays."""
    cfg = AnalysisConfig(lpc_order=order)
    lsp, f0, level, voicing = [], [], [], []
    for x in signals:
        for fr in analyze(x if isinstance(x, AudioBuffer) else AudioBuffer(x), cfg):
            lsp.append(lpc_to_lsp(fr.lpc))
            f0.append(fr.f0)
            level.append(level_to_db(fr.s))
            voicing.append(fr.v)
    return np.array(lsp), np.array(f0), np.array(level), np.array(voicing)


def train_codebooks(signals, operating_points=None, seed: int = DEFAULT_SEED,
                    n_components: int = GMM_COMPONENTS) -> Codebook:
    """Train GMMs (one per LPC order), calibrate lattice steps per operating point,
    train the voicing VQ and fit the conditioning statistics."""
    ops = [get_operating_point(o) for o in (operating_points or OPERATING_POINTS)]
    features = {}
    for order in sorted({op.lpc_order for op in ops}):
        features[order] = corpus_features(signals, order)
        log.info("analyzed %d frames at order %d", len(features[order][0]), order)
    any_order = min(features)
    _, f0, level, voicing = features[any_order]
    if len(f0) < 6000:
        raise ValueError(f"insufficient data: {len(f0)} frames, need at least 6000 (60 s of speech)")

    base = {}
    for order, (lsp, *_rest) in features.items():
        base[order] = gmm_train(lsp, n_components, seed=derive_seed(seed, f"gmm{order}"))
    gmms = {}
    for op in ops:
        lsp = features[op.lpc_order][0]
        gmms[op.id] = calibrate_steps(base[op.lpc_order], lsp, op.lsp_bit_budget)
        log.info("%s: lattice step %.5f, rate %.2f bits/frame (budget %d)", op.id,
                 gmms[op.id].steps[0, 0], measured_rate(gmms[op.id], lsp), op.lsp_bit_budget)
    vq = train_voicing_vq(voicing, seed=derive_seed(seed, "vq"))
    return Codebook(gmms, vq, ConditioningNorm.fit(f0, level))


def op_rate_summary(codebook: Codebook, op: OperatingPoint, lsp) -> float:
    return measured_rate(codebook.gmm(op), lsp)
