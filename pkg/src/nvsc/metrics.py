"""Objective measurements: LPC spectral distortion, bitrate and SNR."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .analysis import UnstableFilterError, is_stable
from .oppoints import FRAME_RATE

SD_GRID = 512
SNR_CAP_DB = 120.0


@dataclass
class DistortionReport:
    per_frame: list
    mean: float
    outliers_2db: float
    outliers_4db: float

    @classmethod
    def from_values(cls, values) -> "DistortionReport":
        v = np.asarray(values, dtype=np.float64)
        if len(v) == 0:
            return cls([], 0.0, 0.0, 0.0)
        return cls(v.tolist(), float(v.mean()), float(np.mean(v > 2.0)), float(np.mean(v > 4.0)))

    def record(self) -> dict:
        d = asdict(self)
        d.pop("per_frame")
        d["frames"] = len(self.per_frame)
        return {"record": "spectral_distortion", **d}


def log_power_spectrum(lpc, n_grid: int = SD_GRID) -> np.ndarray:
    """10 log10(1 / |A(e^jw)|^2) on w = pi k / n_grid, k = 0..n_grid-1."""
    poly = np.concatenate([[1.0], np.asarray(lpc, dtype=np.float64)])
    w = np.pi * np.arange(n_grid) / n_grid
    resp = np.exp(-1j * np.outer(w, np.arange(len(poly)))) @ poly
    return -10.0 * np.log10(np.abs(resp) ** 2)


def spectral_distortion(lpc_a, lpc_b, n_grid: int = SD_GRID) -> float:
    """RMS difference in dB between two all-pole model spectra (gain excluded)."""
    for a in (lpc_a, lpc_b):
        if not is_stable(a):
            raise UnstableFilterError("unstable filter")
    diff = log_power_spectrum(lpc_a, n_grid) - log_power_spectrum(lpc_b, n_grid)
    return float(np.sqrt(np.mean(diff**2)))


def distortion_report(ref_lpcs, test_lpcs, n_grid: int = SD_GRID) -> DistortionReport:
    return DistortionReport.from_values(
        [spectral_distortion(a, b, n_grid) for a, b in zip(ref_lpcs, test_lpcs)])


def bitrate_kbps(payload_bytes: int, n_frames: int) -> float:
    if n_frames == 0:
        return 0.0
    return 8.0 * payload_bytes / (n_frames / FRAME_RATE) / 1000.0


def measure_bitrate(path) -> float:
    """kb/s of a .nvsc file: 8 x payload bytes / (frames / 100 s)."""
    from .bitstream.stream import HEADER_SIZE, read_header

    with open(path, "rb") as fh:
        header = read_header(fh.read(HEADER_SIZE))
    payload = os.path.getsize(path) - HEADER_SIZE
    return bitrate_kbps(payload, header.frame_count)


def snr(reference, test) -> float:
    ref = np.asarray(reference, dtype=np.float64)
    tst = np.asarray(test, dtype=np.float64)
    if ref.shape != tst.shape:
        raise ValueError("reference and test lengths differ")
    signal = float(np.dot(ref, ref))
    if signal == 0.0:
        raise ValueError("zero reference energy")
    noise = float(np.sum((ref - tst) ** 2))
    if noise == 0.0:
        return SNR_CAP_DB
    return float(min(SNR_CAP_DB, 10.0 * np.log10(signal / noise)))


def emit(record: dict, stream) -> None:
    """Write one report record as a JSON line."""
    stream.write(json.dumps(record, sort_keys=True) + "\n")
