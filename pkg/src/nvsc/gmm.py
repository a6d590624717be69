"""Entropy-constrained LSP quantization with a union of Z-lattices.

A diagonal-covariance GMM is trained on LSP vectors; every component owns a
scaled integer lattice centered on its mean. The encoder picks the lattice
cell minimizing squared error plus ``lam`` times the cell's model rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import log_ndtr, logsumexp, ndtr

from .analysis import check_lsp
from .bitstream.tables import LspTables

MIN_LSP_SEPARATION = 0.008
DEFAULT_LAMBDA = 0.01
LN2 = np.log(2.0)


@dataclass(frozen=True)
class LspCode:
    component: int
    indices: tuple


@dataclass(eq=False)
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    steps: np.ndarray
    lam: float = DEFAULT_LAMBDA
    log_likelihood: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.variances = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        self.steps = np.atleast_2d(np.asarray(self.steps, dtype=np.float64))
        k, d = self.means.shape
        if self.weights.shape != (k,) or self.variances.shape != (k, d) or self.steps.shape != (k, d):
            raise ValueError("inconsistent GMM parameter shapes")
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("GMM weights must be positive and sum to 1")
        if np.any(self.variances <= 0) or np.any(self.steps <= 0):
            raise ValueError("GMM variances and lattice steps must be positive")

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @cached_property
    def tables(self) -> LspTables:
        return LspTables(self.weights, self.variances, self.steps)

    def with_steps(self, steps, lam: float) -> "GmmModel":
        return GmmModel(self.weights, self.means, self.variances,
                        np.broadcast_to(steps, self.means.shape).copy(), float(lam),
                        list(self.log_likelihood))


# ---------------------------------------------------------------------------
# training


def _component_log_pdf(x, weights, means, variances):
    diff = x[:, None, :] - means[None]
    return (np.log(weights)[None]
            - 0.5 * np.sum(np.log(2 * np.pi * variances)[None] + diff * diff / variances[None], axis=2))


def _kmeans_pp(x, k, rng):
    centers = [x[rng.integers(len(x))]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers.append(x[rng.integers(len(x))])
        else:
            centers.append(x[rng.choice(len(x), p=d2 / total)])
        d2 = np.minimum(d2, ((x - centers[-1]) ** 2).sum(axis=1))
    return np.array(centers)


def _m_step(x, resp, var_floor):
    nk = resp.sum(axis=0) + 1e-300
    weights = nk / nk.sum()
    means = (resp.T @ x) / nk[:, None]
    variances = (resp.T @ (x * x)) / nk[:, None] - means**2
    return weights, means, np.maximum(variances, var_floor)


def gmm_train(data, n_components: int = 8, n_iters: int = 200, seed: int = 0,
              tol: float = 1e-10, var_floor: float = 1e-6) -> GmmModel:
    """EM for a diagonal-covariance GMM with k-means++ initialization.

    The per-iteration log-likelihood is kept in ``model.log_likelihood``.
    Lattice steps are left at 1 and must be set with :func:`calibrate_steps`.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or len(x) < 10 * n_components * x.shape[1]:
        need = 10 * n_components * (x.shape[1] if x.ndim == 2 else 1)
        raise ValueError(f"insufficient data: need at least {need} vectors, got {len(x)}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(x, n_components, rng)
    assign = np.argmin(((x[:, None, :] - centers[None]) ** 2).sum(axis=2), axis=1)
    resp = np.eye(n_components)[assign]
    weights, means, variances = _m_step(x, resp, var_floor)
    trace = []
    for _ in range(n_iters):
        logp = _component_log_pdf(x, weights, means, variances)
        norm = logsumexp(logp, axis=1)
        ll = float(norm.sum())
        trace.append(ll)
        if len(trace) > 1 and trace[-1] - trace[-2] <= tol * abs(trace[-1]):
            break
        resp = np.exp(logp - norm[:, None])
        weights, means, variances = _m_step(x, resp, var_floor)
    return GmmModel(weights, means, variances, np.ones_like(means), DEFAULT_LAMBDA, trace)


# ---------------------------------------------------------------------------
# quantization


def log_gauss_interval(lo, hi):
    """log(Phi(hi) - Phi(lo)) for lo < hi, stable in both tails."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    flip = lo > 0
    a = np.where(flip, -hi, lo)
    b = np.where(flip, -lo, hi)
    lb = log_ndtr(b)
    with np.errstate(divide="ignore"):
        tail = lb + np.log(-np.expm1(log_ndtr(a) - lb))
        middle = np.log1p(-(ndtr(a) + ndtr(-b)))
    return np.where(b <= 0, tail, np.where(flip, tail, middle))


def _candidates(gmm: GmmModel, x: np.ndarray):
    idx = np.round((x[:, None, :] - gmm.means[None]) / gmm.steps[None])
    recon = gmm.means[None] + idx * gmm.steps[None]
    dist = ((x[:, None, :] - recon) ** 2).sum(axis=2)
    sigma = np.sqrt(gmm.variances)[None]
    log_mass = log_gauss_interval((idx - 0.5) * gmm.steps[None] / sigma,
                                  (idx + 0.5) * gmm.steps[None] / sigma)
    rate = -np.log2(gmm.weights)[None] - log_mass.sum(axis=2) / LN2
    return idx.astype(np.int64), dist, rate


def quantize_batch(gmm: GmmModel, lsp: np.ndarray, lam=None):
    """Vectorized cell choice. Returns ``(components, indices, rate_bits, distortion)``."""
    x = np.atleast_2d(np.asarray(lsp, dtype=np.float64))
    lam = gmm.lam if lam is None else lam
    idx, dist, rate = _candidates(gmm, x)
    best = np.argmin(dist + lam * rate, axis=1)
    rows = np.arange(len(x))
    return best, idx[rows, best], rate[rows, best], dist[rows, best]


def lsp_quantize(lsp, gmm: GmmModel, lam=None) -> LspCode:
    x = check_lsp(lsp)
    if len(x) != gmm.dim:
        raise ValueError(f"LSP dimension {len(x)} does not match GMM dimension {gmm.dim}")
    comp, idx, _, _ = quantize_batch(gmm, x, lam)
    return LspCode(int(comp[0]), tuple(int(i) for i in idx[0]))


def repair_lsp(lsp, min_sep: float = MIN_LSP_SEPARATION) -> np.ndarray:
    """Sort and push neighbours apart until every gap (and both edges) is at least ``min_sep``."""
    w = np.sort(np.clip(np.asarray(lsp, dtype=np.float64), min_sep, np.pi - min_sep))
    for _ in range(10):
        gaps = np.diff(w)
        bad = np.nonzero(gaps < min_sep)[0]
        if not len(bad):
            break
        for i in bad:
            if w[i + 1] - w[i] < min_sep:
                mid = 0.5 * (w[i] + w[i + 1])
                w[i], w[i + 1] = mid - 0.5 * min_sep, mid + 0.5 * min_sep
    w[0] = max(w[0], min_sep)
    for i in range(1, len(w)):
        w[i] = max(w[i], w[i - 1] + min_sep)
    w[-1] = min(w[-1], np.pi - min_sep)
    for i in range(len(w) - 2, -1, -1):
        w[i] = min(w[i], w[i + 1] - min_sep)
    return w


def lsp_dequantize(code: LspCode, gmm: GmmModel) -> np.ndarray:
    m = code.component
    raw = gmm.means[m] + np.asarray(code.indices, dtype=np.float64) * gmm.steps[m]
    return repair_lsp(raw)


# ---------------------------------------------------------------------------
# rate calibration


def rd_lambda(step: float) -> float:
    """Lagrangian slope of a uniform quantizer at high rate: -dD/dR = ln2 * step^2 / 6."""
    return LN2 * step * step / 6.0


def measured_rate(gmm: GmmModel, lsp: np.ndarray) -> float:
    """Mean range-coded LSP bits per frame on ``lsp`` under the model's tables."""
    comp, idx, _, _ = quantize_batch(gmm, lsp)
    return float(gmm.tables.code_length(comp, idx).mean())


def calibrate_steps(gmm: GmmModel, lsp: np.ndarray, bit_budget: float, rel_tol: float = 2e-3,
                    max_iters: int = 60) -> GmmModel:
    """Bisect a global lattice step so the mean coded rate on ``lsp`` hits ``bit_budget``.

    The rate-distortion weight is tied to the step via :func:`rd_lambda`.
    """
    lsp = np.atleast_2d(np.asarray(lsp, dtype=np.float64))
    lo, hi = np.log(1e-5), np.log(1.0)
    best = None
    for _ in range(max_iters):
        mid = 0.5 * (lo + hi)
        step = float(np.exp(mid))
        model = gmm.with_steps(step, rd_lambda(step))
        rate = measured_rate(model, lsp)
        if best is None or abs(rate - bit_budget) < abs(best[1] - bit_budget):
            best = (model, rate)
        if abs(rate - bit_budget) <= rel_tol * bit_budget:
            break
        if rate > bit_budget:
            lo = mid
        else:
            hi = mid
    return best[0]
