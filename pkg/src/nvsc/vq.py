"""9-bit voicing vector quantizer (LBG training in the warped domain)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .warp import unwarp_voicing, warp_voicing

VQ_BITS = 9
VQ_SIZE = 1 << VQ_BITS


@dataclass
class VqCodebook:
    codewords: np.ndarray  # (512, 6), warped domain
    distortion_trace: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        self.codewords = np.asarray(self.codewords, dtype=np.float64)
        if self.codewords.ndim != 2 or not np.all(np.isfinite(self.codewords)):
            raise ValueError("codebook must be a finite 2-D array")


def nearest(data: np.ndarray, codewords: np.ndarray, block: int = 2048):
    """Index of the nearest codeword for each row (ties go to the lowest index) and its distance."""
    data = np.atleast_2d(data)
    idx = np.empty(len(data), dtype=np.int64)
    dist = np.empty(len(data))
    for start in range(0, len(data), block):
        chunk = data[start : start + block]
        d = ((chunk[:, None, :] - codewords[None, :, :]) ** 2).sum(axis=2)
        i = np.argmin(d, axis=1)
        idx[start : start + block] = i
        dist[start : start + block] = d[np.arange(len(chunk)), i]
    return idx, dist


def voicing_encode(v, codebook: VqCodebook) -> int:
    idx, _ = nearest(warp_voicing(v)[None, :], codebook.codewords)
    return int(idx[0])


def voicing_decode(index: int, codebook: VqCodebook) -> np.ndarray:
    return unwarp_voicing(codebook.codewords[index])


def _lloyd(data, cb, max_iters, tol, trace=None):
    prev = np.inf
    for _ in range(max_iters):
        idx, dist = nearest(data, cb)
        distortion = float(dist.mean())
        if trace is not None:
            trace.append(distortion)
        counts = np.bincount(idx, minlength=len(cb))
        sums = np.zeros_like(cb)
        np.add.at(sums, idx, data)
        filled = counts > 0
        cb = cb.copy()
        cb[filled] = sums[filled] / counts[filled, None]
        empty = np.nonzero(~filled)[0]
        for e in empty:
            # re-seed from the most populated cell: its point farthest from the centroid
            big = int(np.argmax(counts))
            members = np.nonzero(idx == big)[0]
            far = members[np.argmax(((data[members] - cb[big]) ** 2).sum(axis=1))]
            cb[e] = data[far]
            idx[far] = e
            counts[big] -= 1
            counts[e] = 1
        if not len(empty) and (distortion == 0.0 or prev - distortion <= tol * prev):
            break
        prev = distortion
    return cb


def vq_train(data, n_codewords: int = VQ_SIZE, seed: int = 0, max_iters: int = 100,
             tol: float = 1e-5, min_per_cell: int = 10) -> VqCodebook:
    """LBG codebook training by repeated splitting and Lloyd refinement.

    ``data`` is an ``(N, dim)`` array in the warped voicing domain and must
    hold at least ``min_per_cell * n_codewords`` vectors.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or len(data) < min_per_cell * n_codewords:
        raise ValueError(
            f"insufficient data: need at least {min_per_cell * n_codewords} vectors, got {len(data)}"
        )
    rng = np.random.default_rng(seed)
    scale = data.std(axis=0) + 1e-3
    cb = data.mean(axis=0, keepdims=True)
    while len(cb) < n_codewords:
        n_split = min(len(cb), n_codewords - len(cb))
        if n_split < len(cb):
            idx, _ = nearest(data, cb)
            order = np.argsort(-np.bincount(idx, minlength=len(cb)), kind="stable")[:n_split]
        else:
            order = np.arange(len(cb))
        delta = 1e-2 * scale * rng.standard_normal((n_split, data.shape[1]))
        cb = np.concatenate([cb, cb[order] - delta])
        cb[order] += delta
        if len(cb) < n_codewords:
            cb = _lloyd(data, cb, 10, tol)
    trace: list = []
    cb = _lloyd(data, cb, max_iters, tol, trace)
    return VqCodebook(cb, distortion_trace=trace)


def train_voicing_vq(voicing: np.ndarray, seed: int = 0, **kwargs) -> VqCodebook:
    return vq_train(warp_voicing(voicing), seed=seed, **kwargs)
