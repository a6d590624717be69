"""Shared fixtures: a synthetic training corpus, a held-out corpus and a trained codebook."""

import numpy as np
import pytest

from nvsc.codebook import train_codebooks
from nvsc.synthetic import synth_corpus

TRAIN_SECONDS = 120.0
HELDOUT_SECONDS = 32.0


@pytest.fixture(scope="session")
def train_corpus():
    return synth_corpus(TRAIN_SECONDS, seed=1)


@pytest.fixture(scope="session")
def heldout_corpus():
    return synth_corpus(HELDOUT_SECONDS, seed=2)


@pytest.fixture(scope="session")
def codebook(train_corpus):
    # about a minute: GMM EM at both orders, three step calibrations and the 512-entry VQ
    return train_codebooks(train_corpus, seed=7)


@pytest.fixture(scope="session")
def train_lsp(train_corpus):
    from nvsc.codebook import corpus_features

    return {order: corpus_features(train_corpus, order)[0] for order in (16, 22)}


@pytest.fixture(scope="session")
def codebook_file(codebook, tmp_path_factory):
    path = tmp_path_factory.mktemp("codebook") / "codebook.nvcb"
    codebook.save(path)
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_stable_lpc(rng, order, max_k=0.95):
    from nvsc.analysis import reflection_to_lpc

    return reflection_to_lpc(rng.uniform(-max_k, max_k, order))


def random_qframes(rng, op, n, n_components=8, escape_rate=0.01):
    """Random but field-valid QuantizedFrames, including escaped lattice indices."""
    from nvsc.gmm import LspCode
    from nvsc.quantize import QuantizedFrame

    out = []
    for _ in range(n):
        idx = rng.integers(-20, 21, op.lpc_order)
        esc = rng.random(op.lpc_order) < escape_rate
        idx[esc] = rng.choice([-1, 1], esc.sum()) * rng.integers(65, 32768, esc.sum())
        out.append(QuantizedFrame(
            LspCode(int(rng.integers(n_components)), tuple(int(i) for i in idx)),
            (int(rng.integers(2)), int(rng.integers(1 << op.level_bits))),
            (int(rng.integers(2)), int(rng.integers(1 << op.pitch_bits))),
            int(rng.integers(1 << op.voicing_bits)),
        ))
    return out
