"""Per-frame vocoder analysis: LPC, residual level, pitch and banded voicing.

LPC sign convention: ``A(z) = 1 + sum_i a_i z^-i``, i.e. the predictor is
``x_hat[n] = -sum_i a_i x[n - i]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SAMPLE_RATE = 16000
FRAME_LENGTH = 160
N_BANDS = 6


class UnstableFilterError(ValueError):
    pass


class LspConversionError(ValueError):
    pass


@dataclass
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate != SAMPLE_RATE:
            raise ValueError(f"sample rate must be {SAMPLE_RATE} Hz, got {self.sample_rate}")
        if self.samples.ndim != 1:
            raise ValueError("audio must be mono")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("audio contains non-finite samples")

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class FrameParams:
    """Vocoder parameters of one 10 ms frame.

    ``lpc`` holds a_1..a_M, ``s`` the linear residual RMS, ``f0`` the pitch in
    Hz (0 for unvoiced) and ``v`` the six per-band periodic energy fractions.
    """

    lpc: np.ndarray
    s: float
    f0: float
    v: np.ndarray

    @property
    def order(self) -> int:
        return len(self.lpc)


@dataclass(frozen=True)
class AnalysisConfig:
    lpc_order: int = 16
    frame_length: int = FRAME_LENGTH
    window_length: int = 400
    pitch_window_length: int = 640
    voicing_window_length: int = 1024
    pitch_min: float = 50.0
    pitch_max: float = 400.0
    voicing_threshold: float = 0.3
    band_edges: tuple = (0.0, 500.0, 1000.0, 2000.0, 3000.0, 5000.0, 8000.0)
    lag_window_bandwidth: float = 60.0
    noise_floor: float = 1e-6
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.lpc_order not in (16, 22):
            raise ValueError(f"lpc_order must be 16 or 22, got {self.lpc_order}")
        edges = np.asarray(self.band_edges, dtype=float)
        if len(edges) != N_BANDS + 1 or np.any(np.diff(edges) <= 0):
            raise ValueError("band edges must be 7 strictly increasing frequencies")
        if edges[0] != 0.0 or edges[-1] != self.sample_rate / 2:
            raise ValueError("band edges must span 0 to 8000 Hz")


# ---------------------------------------------------------------------------
# framing


def frame_signal(audio, config: AnalysisConfig = AnalysisConfig(), window_length=None):
    """Cut ``audio`` into 10 ms frames, each with a centered analysis segment.

    Returns an array of shape ``(ceil(len / 160), window_length)``; segment
    ``t`` is centered on samples ``[160 t, 160 t + 160)`` and zero-padded
    where it extends past either signal edge.
    """
    x = audio.samples if isinstance(audio, AudioBuffer) else np.asarray(audio, dtype=np.float64)
    if len(x) == 0:
        raise ValueError("empty signal")
    hop = config.frame_length
    wl = config.window_length if window_length is None else window_length
    n_frames = -(-len(x) // hop)
    starts = np.arange(n_frames) * hop + hop // 2 - wl // 2
    pad_left = max(0, -int(starts[0]))
    pad_right = max(0, int(starts[-1]) + wl - len(x))
    xp = np.concatenate([np.zeros(pad_left), x, np.zeros(pad_right)])
    idx = (starts + pad_left)[:, None] + np.arange(wl)[None, :]
    return xp[idx]


def hann(n: int) -> np.ndarray:
    # periodic-free symmetric variant with nonzero end points
    return 0.5 - 0.5 * np.cos(2 * np.pi * (np.arange(n) + 0.5) / n)


# ---------------------------------------------------------------------------
# linear prediction


def levinson(r: np.ndarray, order: int):
    """Levinson-Durbin recursion on autocorrelation ``r[0..order]``.

    Returns ``(a, k, err)`` with ``a`` the predictor polynomial a_1..a_M,
    ``k`` the reflection coefficients and ``err`` the final prediction error.
    """
    a = np.zeros(order)
    k = np.zeros(order)
    err = float(r[0])
    for m in range(order):
        acc = r[m + 1] + np.dot(a[:m], r[m:0:-1])
        km = -acc / err
        k[m] = km
        a[:m] = a[:m] + km * a[:m][::-1]
        a[m] = km
        err *= 1.0 - km * km
    return a, k, err


def autocorrelation(x: np.ndarray, max_lag: int) -> np.ndarray:
    n = len(x)
    return np.array([np.dot(x[: n - lag], x[lag:]) for lag in range(max_lag + 1)])


def lag_window(order: int, bandwidth: float, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    lags = np.arange(order + 1)
    return np.exp(-0.5 * (2 * np.pi * bandwidth * lags / sample_rate) ** 2)


def lpc_analyze(frame, order: int, window_energy=None, lag_window_bandwidth: float = 60.0,
                noise_floor: float = 1e-6, sample_rate: int = SAMPLE_RATE):
    """Autocorrelation-method LPC of an already windowed frame.

    Parameters
    ----------
    frame : array_like
        Windowed samples.
    order : int
        Predictor order M.
    window_energy : float, optional
        Effective window length used to turn the prediction-error energy into
        an RMS level (sum of squared window weights). Defaults to
        ``len(frame)``, which is right for unwindowed input.

    Returns
    -------
    a : ndarray
        Predictor coefficients a_1..a_M.
    residual_rms : float
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    x = np.asarray(frame, dtype=np.float64)
    r = autocorrelation(x, order)
    if r[0] <= 0.0:
        return np.zeros(order), 0.0
    eff = float(len(x) if window_energy is None else window_energy)
    r = r * lag_window(order, lag_window_bandwidth, sample_rate)
    floor = noise_floor
    while True:
        rr = r.copy()
        rr[0] *= 1.0 + floor
        a, k, err = levinson(rr, order)
        if np.all(np.abs(k) < 1.0) and err > 0.0:
            break
        floor *= 10.0
    return a, float(np.sqrt(err / eff))


def lpc_to_reflection(lpc) -> np.ndarray:
    """Step-down recursion from predictor coefficients to reflection coefficients."""
    a = np.array(lpc, dtype=np.float64)
    m_order = len(a)
    k = np.zeros(m_order)
    for m in range(m_order - 1, -1, -1):
        km = a[m]
        if not abs(km) < 1.0:
            raise UnstableFilterError("unstable filter")
        k[m] = km
        if m:
            prev = a[:m]
            a[:m] = (prev - km * prev[::-1]) / (1.0 - km * km)
    return k


def reflection_to_lpc(refl) -> np.ndarray:
    """Step-up recursion from reflection coefficients to predictor coefficients."""
    k = np.asarray(refl, dtype=np.float64)
    a = np.zeros(len(k))
    for m, km in enumerate(k):
        a[:m] = a[:m] + km * a[:m][::-1]
        a[m] = km
    return a


def is_stable(lpc) -> bool:
    try:
        lpc_to_reflection(lpc)
    except UnstableFilterError:
        return False
    return True


# ---------------------------------------------------------------------------
# line spectral pairs


def _sum_diff_polys(a: np.ndarray):
    poly = np.concatenate([[1.0], a, [0.0]])
    rev = poly[::-1]
    return poly + rev, poly - rev


def _deflate(poly: np.ndarray, divisor_lag: int, sign: float) -> np.ndarray:
    # divide by (1 + sign * z^-lag), dropping the (zero) remainder
    out = poly[: len(poly) - divisor_lag].copy()
    for i in range(divisor_lag, len(out)):
        out[i] -= sign * out[i - divisor_lag]
    return out


def _symmetric_parts(a: np.ndarray):
    """P and Q with their trivial roots at z = +-1 removed; both are symmetric."""
    p, q = _sum_diff_polys(a)
    if len(a) % 2 == 0:
        return _deflate(p, 1, 1.0), _deflate(q, 1, -1.0)
    return p, _deflate(q, 2, -1.0)


@lru_cache(maxsize=64)
def _cos_basis(n: int, n_grid: int):
    # grid includes both endpoints: the deflated polynomials have no roots there
    grid = np.linspace(0.0, np.pi, n_grid + 1)
    c = (n - 1) / 2.0 - np.arange(n)
    return grid, np.cos(np.multiply.outer(grid, c))


def _zero_phase(poly: np.ndarray, omega) -> np.ndarray:
    c = (len(poly) - 1) / 2.0 - np.arange(len(poly))
    return np.cos(np.multiply.outer(omega, c)) @ poly


def _bracket_roots(f, grid):
    neg = np.signbit(f)
    idx = np.nonzero(neg[:-1] != neg[1:])[0]
    return grid[idx], grid[idx + 1]


def lpc_to_lsp(lpc) -> np.ndarray:
    """Line spectral frequencies (radians, ascending in (0, pi)) of a stable LPC filter."""
    a = np.asarray(lpc, dtype=np.float64)
    m_order = len(a)
    p, q = _symmetric_parts(a)
    n_p = (m_order + 1) // 2
    n_grid = 64 * (m_order + 1)
    while True:
        grid, cos_p = _cos_basis(len(p), n_grid)
        lo_p, hi_p = _bracket_roots(cos_p @ p, grid)
        grid, cos_q = _cos_basis(len(q), n_grid)
        lo_q, hi_q = _bracket_roots(cos_q @ q, grid)
        if len(lo_p) + len(lo_q) == m_order or n_grid >= 1 << 18:
            break
        n_grid *= 8
    if len(lo_p) != n_p or len(lo_q) != m_order - n_p:
        raise LspConversionError("LSP conversion failed")

    # joint bisection; P roots occupy the even slots, Q roots the odd ones
    lo = np.empty(m_order)
    hi = np.empty(m_order)
    lo[0::2], lo[1::2] = lo_p, lo_q
    hi[0::2], hi[1::2] = hi_p, hi_q
    is_p = np.zeros(m_order, dtype=bool)
    is_p[0::2] = True

    def f(w):
        return np.where(is_p, _zero_phase(p, w), _zero_phase(q, w))

    neg_lo = np.signbit(f(lo))
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        same = np.signbit(f(mid)) == neg_lo
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    lsp = 0.5 * (lo + hi)
    if np.any(np.diff(lsp) <= 0) or lsp[0] <= 0.0 or lsp[-1] >= np.pi:
        raise LspConversionError("LSP conversion failed")
    return lsp


def check_lsp(lsp) -> np.ndarray:
    w = np.asarray(lsp, dtype=np.float64)
    if w.ndim != 1 or len(w) == 0 or not np.all(np.isfinite(w)):
        raise ValueError("invalid LSP vector")
    if w[0] <= 0.0 or w[-1] >= np.pi or np.any(np.diff(w) <= 0):
        raise ValueError("invalid LSP vector")
    return w


def lsp_to_lpc(lsp) -> np.ndarray:
    """Inverse of :func:`lpc_to_lsp`."""
    w = check_lsp(lsp)
    m_order = len(w)
    p = np.array([1.0])
    q = np.array([1.0])
    for omega in w[0::2]:
        p = np.convolve(p, [1.0, -2.0 * np.cos(omega), 1.0])
    for omega in w[1::2]:
        q = np.convolve(q, [1.0, -2.0 * np.cos(omega), 1.0])
    if m_order % 2 == 0:
        p = np.convolve(p, [1.0, 1.0])
        q = np.convolve(q, [1.0, -1.0])
    else:
        q = np.convolve(q, [1.0, 0.0, -1.0])
    return 0.5 * (p + q)[1 : m_order + 1]


# ---------------------------------------------------------------------------
# pitch and voicing


def normalized_autocorrelation(x: np.ndarray, min_lag: int, max_lag: int) -> np.ndarray:
    """Normalized correlation between ``x[:n-lag]`` and ``x[lag:]`` for each lag."""
    n = len(x)
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.fft.rfft(x, nfft)
    acf = np.fft.irfft(spec * np.conj(spec), nfft)[: max_lag + 1]
    csum = np.concatenate([[0.0], np.cumsum(x * x)])
    lags = np.arange(min_lag, max_lag + 1)
    e_head = csum[n - lags]
    e_tail = csum[n] - csum[lags]
    denom = np.sqrt(e_head * e_tail)
    out = np.zeros(len(lags))
    ok = denom > 1e-20
    out[ok] = acf[lags][ok] / denom[ok]
    return out


def pitch_estimate(frame, config: AnalysisConfig = AnalysisConfig()) -> float:
    """Autocorrelation pitch estimate of a pitch-analysis segment; 0 means unvoiced."""
    x = np.asarray(frame, dtype=np.float64)
    x = x - x.mean()
    if np.dot(x, x) < 1e-12 * len(x):
        return 0.0
    fs = config.sample_rate
    min_lag = int(np.floor(fs / config.pitch_max))
    max_lag = int(np.ceil(fs / config.pitch_min))
    if max_lag + 2 > len(x):
        raise ValueError("pitch segment shorter than the longest candidate lag")
    r = normalized_autocorrelation(x, min_lag - 1, max_lag + 1)
    inner = r[1:-1]
    best = float(inner.max())
    if best < config.voicing_threshold:
        return 0.0
    # prefer the shortest lag whose peak is close to the global maximum (octave errors)
    peaks = np.nonzero((inner >= r[:-2]) & (inner >= r[2:]) & (inner >= 0.9 * best))[0]
    i = int(peaks[0]) if len(peaks) else int(np.argmax(inner))
    ym, y0, yp = r[i], r[i + 1], r[i + 2]
    den = ym - 2.0 * y0 + yp
    delta = 0.5 * (ym - yp) / den if den < 0 else 0.0
    lag = min_lag + i + float(np.clip(delta, -0.5, 0.5))
    return float(np.clip(fs / lag, config.pitch_min, config.pitch_max))


def band_split(x: np.ndarray, edges, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Split ``x`` into bands with brick-wall FFT masks (zero-padded to 2x length)."""
    n = len(x)
    nfft = 2 * n
    spec = np.fft.rfft(x, nfft)
    freqs = np.fft.rfftfreq(nfft, 1.0 / sample_rate)
    out = np.empty((len(edges) - 1, n))
    for i in range(len(edges) - 1):
        lo, hi = edges[i], edges[i + 1]
        mask = (freqs >= lo) & ((freqs < hi) if i < len(edges) - 2 else (freqs <= hi))
        out[i] = np.fft.irfft(spec * mask, nfft)[:n]
    return out


def _correlation_at(y: np.ndarray, lag: int) -> float:
    head, tail = y[: len(y) - lag], y[lag:]
    den = np.sqrt(np.dot(head, head) * np.dot(tail, tail))
    if den <= 1e-20:
        return 0.0
    return float(np.dot(head, tail) / den)


def voicing_estimate(frame, f0: float, config: AnalysisConfig = AnalysisConfig()) -> np.ndarray:
    """Per-band periodic energy fraction via comb correlation at the pitch lag."""
    if f0 <= 0:
        return np.zeros(N_BANDS)
    x = np.asarray(frame, dtype=np.float64)
    x = x - x.mean()
    lag = config.sample_rate / f0
    lo = int(np.floor(lag))
    frac = lag - lo
    v = np.zeros(N_BANDS)
    for i, y in enumerate(band_split(x, config.band_edges, config.sample_rate)):
        c = (1.0 - frac) * _correlation_at(y, lo) + frac * _correlation_at(y, lo + 1)
        v[i] = c
    return np.clip(v, 0.0, 1.0)


# ---------------------------------------------------------------------------


def analyze(audio, config: AnalysisConfig = AnalysisConfig()) -> list:
    """Run the full per-frame analysis over ``audio``."""
    lpc_frames = frame_signal(audio, config)
    pitch_frames = frame_signal(audio, config, config.pitch_window_length)
    voicing_frames = frame_signal(audio, config, config.voicing_window_length)
    win = hann(config.window_length)
    win_energy = float(np.dot(win, win))
    out = []
    for seg, pseg, vseg in zip(lpc_frames, pitch_frames, voicing_frames):
        a, rms = lpc_analyze(seg * win, config.lpc_order, window_energy=win_energy,
                             lag_window_bandwidth=config.lag_window_bandwidth,
                             noise_floor=config.noise_floor, sample_rate=config.sample_rate)
        f0 = pitch_estimate(pseg, config)
        v = voicing_estimate(vseg, f0, config)
        out.append(FrameParams(lpc=a, s=rms, f0=f0, v=v))
    return out
