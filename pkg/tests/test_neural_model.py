import math

import numpy as np
import pytest
import torch
from scipy.stats import chisquare

from nvsc.neural.dml import (BIN_WIDTH, LOG_SCALE_MIN, N_BINS, all_bin_log_masses, dml_log_prob, dml_nll,
                             dml_sample, split_params)
from nvsc.neural.model import (FrameTier, ModelConfig, SampleRNN, forward_nll, generate, gru_step,
                               upsample_learned)

UNIFORM_NLL = 16 * math.log(2)
D = torch.float64


def _t(*xs):
    return [torch.as_tensor(x, dtype=D) for x in xs]


def _sigmoid(x):
    return 1 / (1 + math.exp(-x))


class TestDml:
    def test_single_component_centred(self):
        s = 0.001
        logits, mu, log_s = _t([0.0], [100 / 32768], [math.log(s)])
        mass = math.exp(float(dml_log_prob(logits, mu, log_s, torch.tensor(100 / 32768, dtype=D))))
        assert mass == pytest.approx(2 * _sigmoid(BIN_WIDTH / (2 * s)) - 1, rel=1e-10)

    def test_mixture_degeneracy(self):
        x = torch.tensor([0.0123, -0.5, 0.99], dtype=D)
        one = dml_nll(*_t([0.0], [0.01], [-4.0]), x)
        two = dml_nll(*_t([math.log(0.3), math.log(0.7)], [0.01, 0.01], [-4.0, -4.0]), x)
        torch.testing.assert_close(one, two, rtol=0, atol=1e-12)

    def test_masses_sum_to_one(self, rng):
        for _ in range(10):
            logits, mu, log_s = _t(rng.normal(size=10), rng.uniform(-1.2, 1.2, 10), rng.uniform(-9, 1, 10))
            total = torch.logsumexp(all_bin_log_masses(logits, mu, split_params(
                torch.cat([logits, mu, log_s]), 10)[2]), 0)
            assert abs(float(total.exp()) - 1) <= 1e-6

    def test_edge_bins_absorb_tails(self):
        logits, mu, log_s = _t([0.0], [5.0], [-2.0])
        assert float(dml_log_prob(logits, mu, log_s, torch.tensor(1.0, dtype=D)).exp()) == pytest.approx(1.0)

    def test_log_scale_clamped(self):
        raw = torch.tensor([0.0, 0.0, -50.0], dtype=D)
        assert float(split_params(raw, 1)[2]) == LOG_SCALE_MIN
        with pytest.raises(ValueError):
            split_params(raw, 2)

    def test_sampling_at_scale_floor(self):
        # at the clamp floor the scale is still ~30 bins wide, so the draw is concentrated, not a point
        rng = np.random.default_rng(5)
        mu, s_bins = 1234, math.exp(LOG_SCALE_MIN) * 32768
        draws = np.array([dml_sample([0.0], [mu / 32768], [-20.0], rng) for _ in range(10_000)])
        assert np.mean(np.abs(draws - mu) <= 8 * s_bins) >= 0.999
        assert abs(np.median(draws) - mu) <= 2
        p_centre = 2 * _sigmoid(BIN_WIDTH / (2 * math.exp(LOG_SCALE_MIN))) - 1
        assert abs(np.mean(draws == mu) - p_centre) <= 4 * math.sqrt(p_centre / 10_000)

    def test_sampling_deterministic(self):
        args = ([0.1, -0.3], [0.0, 0.2], [-3.0, -4.0])
        r1, r2 = np.random.default_rng(9), np.random.default_rng(9)
        assert [dml_sample(*args, r1) for _ in range(100)] == [dml_sample(*args, r2) for _ in range(100)]

    def test_sample_range(self, rng):
        for _ in range(200):
            k = dml_sample(rng.normal(size=3), rng.uniform(-3, 3, 3), rng.uniform(-7, 2, 3), rng)
            assert -32768 <= k <= 32767

    def test_histogram_chi_square(self):
        rng = np.random.default_rng(2024)
        logits, mu, log_s = [0.2, -0.4, 0.1], [-0.003, 0.0, 0.004], [np.log(1.2e-3), np.log(2e-3), np.log(1.5e-3)]
        probs = all_bin_log_masses(*_t(logits, mu, log_s)).exp().numpy()
        draws = np.array([dml_sample(logits, mu, log_s, rng) for _ in range(100_000)]) + 32768
        counts = np.bincount(draws, minlength=N_BINS)
        expected = probs * len(draws)
        # merge bins left to right until each cell expects at least 5 draws
        edges = [0]
        acc = 0.0
        for i, e in enumerate(expected):
            acc += e
            if acc >= 5:
                edges.append(i + 1)
                acc = 0.0
        edges[-1] = N_BINS
        obs = np.add.reduceat(counts, edges[:-1])
        exp = np.add.reduceat(expected, edges[:-1])
        _, p = chisquare(obs, exp * obs.sum() / exp.sum())
        assert p > 0.01


class TestGru:
    def test_zero(self):
        h = gru_step(*_t(np.zeros((6, 3)), np.zeros((6, 2)), np.zeros(6), np.zeros(6), np.ones(3), np.zeros(2)))
        assert torch.all(h == 0)

    def test_golden_two_units(self):
        # 1-d input, 2 units; rows ordered r, z, n
        w_ih = np.array([[0.5], [-0.3], [0.8], [0.1], [0.4], [-0.6]])
        w_hh = np.array([[0.2, -0.1], [0.3, 0.05], [-0.4, 0.2], [0.1, 0.6], [0.7, -0.2], [0.15, 0.25]])
        b_ih = np.array([0.1, 0.0, -0.1, 0.2, 0.05, 0.0])
        b_hh = np.array([0.0, 0.1, 0.0, -0.05, 0.0, 0.1])
        x, h = np.array([0.7]), np.array([0.3, -0.2])
        gi, gh = w_ih @ x + b_ih, w_hh @ h + b_hh
        expect = []
        for j in range(2):
            r = _sigmoid(gi[j] + gh[j])
            z = _sigmoid(gi[2 + j] + gh[2 + j])
            n = math.tanh(gi[4 + j] + r * gh[4 + j])
            expect.append((1 - z) * n + z * h[j])
        out = gru_step(*_t(w_ih, w_hh, b_ih, b_hh, x, h))
        np.testing.assert_allclose(out.numpy(), expect, atol=1e-12)

    def test_matches_torch_gru(self):
        torch.manual_seed(0)
        gru = torch.nn.GRU(5, 4, batch_first=True).to(D)
        x, h = torch.randn(5, dtype=D), torch.randn(4, dtype=D)
        ref = gru(x.view(1, 1, 5), h.view(1, 1, 4))[1].view(4)
        out = gru_step(gru.weight_ih_l0, gru.weight_hh_l0, gru.bias_ih_l0, gru.bias_hh_l0, x, h)
        torch.testing.assert_close(out, ref, rtol=0, atol=1e-12)


class TestUpsample:
    def test_length(self):
        w, b = torch.randn(3, 3, 10, dtype=D), torch.zeros(3, dtype=D)
        assert upsample_learned(w, b, torch.randn(1, 3, 5, dtype=D), 10).shape == (1, 3, 50)

    def test_all_ones_is_hold(self):
        x = torch.tensor([[[1.0, -2.0, 3.0]]], dtype=D)
        out = upsample_learned(torch.ones(1, 1, 4, dtype=D), None, x, 4)
        assert out.flatten().tolist() == [1.0] * 4 + [-2.0] * 4 + [3.0] * 4

    def test_dense_matrix_oracle(self, rng):
        C, O, r, T = 3, 2, 5, 4
        w = rng.normal(size=(C, O, r))
        w[:, :, 0] += np.eye(C, O)
        b = rng.normal(size=O)
        x = rng.normal(size=(C, T))
        dense = np.zeros((O * T * r, C * T))
        for o in range(O):
            for t in range(T):
                for j in range(r):
                    for c in range(C):
                        dense[o * T * r + t * r + j, c * T + t] = w[c, o, j]
        expect = (dense @ x.reshape(-1)).reshape(O, T * r) + b[:, None]
        out = upsample_learned(*_t(w, b), torch.as_tensor(x[None], dtype=D), r)[0]
        np.testing.assert_allclose(out.numpy(), expect, atol=1e-12)

    def test_kernel_mismatch(self):
        with pytest.raises(ValueError, match="kernel size"):
            upsample_learned(torch.ones(1, 1, 3), None, torch.ones(1, 1, 2), 4)


class TestTier:
    def test_one_frame_gives_ten(self):
        tier = FrameTier(160, 10, 8, 30, has_upper=False).to(D)
        up, h = tier(torch.zeros(1, 1, 160, dtype=D), torch.zeros(1, 1, 30, dtype=D), None,
                     torch.zeros(1, 8, dtype=D))
        assert up.shape == (1, 10, 8) and h.shape == (1, 8)

    def test_zero_everything(self):
        tier = FrameTier(16, 8, 4, 6, has_upper=True).to(D)
        with torch.no_grad():
            for p in tier.parameters():
                p.zero_()
        up, h = tier(torch.zeros(2, 3, 16, dtype=D), torch.zeros(2, 3, 6, dtype=D), torch.zeros(2, 3, 4, dtype=D),
                     torch.zeros(2, 4, dtype=D))
        assert torch.all(up == 0) and torch.all(h == 0)

    def test_step_matches_forward(self):
        torch.manual_seed(1)
        tier = FrameTier(16, 8, 4, 6, has_upper=True).to(D)
        frames, cond, upper = torch.randn(1, 3, 16, dtype=D), torch.randn(1, 3, 6, dtype=D), torch.randn(1, 3, 4, dtype=D)
        up, _ = tier(frames, cond, upper, torch.zeros(1, 4, dtype=D))
        h = torch.zeros(4, dtype=D)
        steps = []
        for t in range(3):
            u, h = tier.step(frames[0, t], tier.cond(cond[0, t]), upper[0, t], h)
            steps.append(u)
        torch.testing.assert_close(torch.cat(steps), up[0], rtol=0, atol=1e-12)

    def test_shape_errors(self):
        tier = FrameTier(16, 8, 4, 6, has_upper=True)
        with pytest.raises(ValueError):
            tier(torch.zeros(1, 2, 15), torch.zeros(1, 2, 6), torch.zeros(1, 2, 4), torch.zeros(1, 4))
        with pytest.raises(ValueError):
            tier(torch.zeros(1, 2, 16), torch.zeros(1, 2, 6), None, torch.zeros(1, 4))


def _model(hidden=16, n_mix=4, cond_dim=30, seed=0):
    return SampleRNN(ModelConfig(hidden=hidden, cond_dim=cond_dim, n_mix=n_mix), seed=seed).to(D)


class TestModel:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(ratios=(2, 8, 5))
        with pytest.raises(ValueError):
            ModelConfig(frame_sizes=(2, 2, 16, 320))
        assert ModelConfig.from_json(ModelConfig().to_json()) == ModelConfig()

    def test_init_nll_near_uniform(self, heldout_corpus, rng):
        model = SampleRNN(ModelConfig(hidden=64))
        x = heldout_corpus[0][16000:32000]
        nll = forward_nll(model, x, rng.standard_normal((100, 30)))["nll"]
        assert abs(nll - UNIFORM_NLL) <= 0.15 * UNIFORM_NLL

    def test_chunked_equals_single_pass(self, rng):
        model = _model()
        x = torch.as_tensor(0.1 * rng.standard_normal((2, 960)), dtype=D)
        c = torch.as_tensor(rng.standard_normal((2, 6, 30)), dtype=D)
        with torch.no_grad():
            full, _ = model(x, c)
            a, st = model(x[:, :480], c[:, :3])
            b, _ = model(x[:, 480:], c[:, 3:], st)
        torch.testing.assert_close(torch.cat([a, b], 1), full, rtol=0, atol=1e-10)

    def test_reset_halves(self, rng):
        model = _model()
        x = 0.1 * rng.standard_normal(480)
        c = rng.standard_normal((3, 30))
        single = forward_nll(model, x, c)["nll"]
        # each half starts from a reset state, so the mean over both equals the single pass
        twice = np.mean([forward_nll(model, x, c)["nll"] for _ in range(2)])
        assert twice == pytest.approx(single, abs=1e-9)

    def test_batch_independence(self, rng):
        model = _model()
        x = torch.as_tensor(0.1 * rng.standard_normal((3, 320)), dtype=D)
        c = torch.as_tensor(rng.standard_normal((3, 2, 30)), dtype=D)
        with torch.no_grad():
            batched, _ = model(x, c)
            alone = torch.cat([model(x[i : i + 1], c[i : i + 1])[0] for i in (2, 0, 1)])
        torch.testing.assert_close(alone, batched[[2, 0, 1]], rtol=0, atol=1e-12)

    def test_total_is_sum_of_conditionals(self, rng):
        out = forward_nll(_model(), 0.1 * rng.standard_normal(480), rng.standard_normal((3, 30)))
        assert out["nll"] == pytest.approx(out["per_sample"].sum() / 480, abs=1e-12)

    def test_forward_nll_bits(self, rng):
        out = forward_nll(_model(), 0.1 * rng.standard_normal(320), rng.standard_normal((2, 30)))
        assert out["bits_per_sample"] == pytest.approx(out["nll"] / math.log(2))
        assert out["per_sample"].shape == (320,)

    def test_length_mismatch(self, rng):
        with pytest.raises(ValueError, match="length mismatch"):
            forward_nll(_model(), np.zeros(300), np.zeros((2, 30)))
        with pytest.raises(ValueError):
            _model()(torch.zeros(1, 320, dtype=D), torch.zeros(1, 2, 24, dtype=D))

    def test_seeded_init(self):
        a, b, c = _model(seed=1), _model(seed=1), _model(seed=2)
        for (n, p), q, r in zip(a.named_parameters(), b.parameters(), c.parameters()):
            assert torch.equal(p, q), n
        assert not all(torch.equal(p, r) for p, r in zip(a.parameters(), c.parameters()))


class TestGenerate:
    def test_length_and_determinism(self, rng):
        model = _model(hidden=8, n_mix=2)
        cond = rng.standard_normal((3, 30))
        a, b = generate(model, cond, seed=3), generate(model, cond, seed=3)
        assert len(a) == 480 and np.array_equal(a, b)
        assert not np.array_equal(a, generate(model, cond, seed=4))
        assert np.all(np.abs(a) <= 1.0) and np.all(np.round(a * 32768) == a * 32768)

    def test_log_probs_match_teacher_forcing(self, rng):
        model = _model(hidden=8, n_mix=3)
        cond = rng.standard_normal((2, 30))
        x, lp = generate(model, cond, seed=1, return_log_probs=True)
        tf = forward_nll(model, x, cond)["per_sample"]
        np.testing.assert_allclose(-lp, tf, atol=1e-9)

    def test_trained_toy_self_consistency(self, rng):
        from nvsc.neural.train import Trainer, TrainerConfig, ChunkSampler
        from nvsc.synthetic import synth_vowel

        model = _model(hidden=16, n_mix=4)
        wave = synth_vowel(0.2, seed=1)
        cond = np.zeros((20, 30))
        trainer = Trainer(model, TrainerConfig(batch_size=2, seq_len=1600, lr=1e-3))
        sampler = ChunkSampler([(wave, cond)], 2, 1600, seed=0, dtype=D)
        for _ in range(20):
            trainer.train_step(next(sampler))
        x = generate(model, cond[:3], seed=0)
        nll = forward_nll(model, x, cond[:3])["nll"]
        assert np.isfinite(nll) and nll <= UNIFORM_NLL + 1
