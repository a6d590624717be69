"""Per-purpose random streams derived from one user seed."""

import zlib

import numpy as np

DEFAULT_SEED = 0x5EED


def derive_seed(seed: int, purpose: str) -> int:
    """Stable 63-bit seed for ``purpose`` (e.g. ``"vq"``, ``"gmm"``, ``"dml"``)."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(purpose.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0]) >> 1


def rng_for(seed: int, purpose: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, purpose))
