import numpy as np
import pytest
import torch

from textmotion.errors import InvalidTokenError, NoDataError, ShapeMismatchError
from textmotion.preprocess import train_norm_stats
from textmotion.synthetic import SyntheticSpec, make_synthetic_dataset
from textmotion.vq_training import (VQTrainConfig, expert_fingerprint, load_expert,
                                    train_vqvae)
from textmotion.vqvae import (Codebook, VQConfig, VQExpert, pad_to_multiple,
                              tokens_to_motion, vq_loss)


@pytest.fixture(scope="module")
def small_dataset():
    return make_synthetic_dataset(SyntheticSpec(n_clips=40, seed=11))


def _toy_codebook(entries) -> Codebook:
    book = Codebook(len(entries), len(entries[0]))
    with torch.no_grad():
        book.embed[:] = torch.tensor(entries, dtype=torch.float32)
    return book


class TestQuantize:
    def test_nearest_assignment(self):
        book = _toy_codebook([[0.0, 0.0], [1.0, 1.0]])
        z = torch.tensor([[0.1, 0.1], [0.9, 1.2], [-3.0, 0.0]])
        assert book.assign(z).tolist() == [0, 1, 0]

    def test_tie_breaks_to_lowest_index(self):
        book = _toy_codebook([[0.0, 0.0], [1.0, 1.0]])
        # z equidistant from both entries
        assert book.assign(torch.tensor([[0.5, 0.5]])).tolist() == [0]
        dup = _toy_codebook([[2.0, 2.0], [1.0, 1.0], [1.0, 1.0]])
        assert dup.assign(torch.tensor([[1.0, 1.0], [1.1, 0.9]])).tolist() == [1, 1]

    def test_matches_float64_brute_force(self):
        torch.manual_seed(3)
        book = Codebook(64, 32)
        with torch.no_grad():
            book.embed.normal_()
        z = torch.randn(500, 32)
        got = book.assign(z).numpy()
        d2 = ((z.numpy().astype(np.float64)[:, None, :]
               - book.embed.detach().numpy().astype(np.float64)[None]) ** 2).sum(-1)
        assert (got == d2.argmin(axis=1)).all()

    def test_lookup_rejects_out_of_range(self):
        book = _toy_codebook([[0.0, 0.0], [1.0, 1.0]])
        with pytest.raises(InvalidTokenError):
            book.lookup(torch.tensor([0, 2]))
        with pytest.raises(InvalidTokenError):
            book.lookup(torch.tensor([-1]))

    def test_assign_shape_guard(self):
        book = _toy_codebook([[0.0, 0.0], [1.0, 1.0]])
        with pytest.raises(ShapeMismatchError):
            book.assign(torch.zeros(4, 3))


class TestExpertShapes:
    def test_round_trip_shapes_many_configs(self):
        rng = np.random.default_rng(0)
        for _ in range(12):
            cfg = VQConfig(modality=str(rng.choice(["body", "hand", "face"])),
                           n_codes=int(rng.integers(4, 32)),
                           code_dim=int(rng.integers(4, 16)),
                           hidden=int(rng.choice([16, 32])))
            torch.manual_seed(0)
            ex = VQExpert(cfg)
            t = int(rng.integers(2, 12)) * cfg.downsample
            m = torch.randn(2, t, cfg.in_dim)
            m_hat, z, z_q, tokens = ex(m)
            assert m_hat.shape == m.shape
            assert z.shape == (2, t // cfg.downsample, cfg.code_dim)
            assert z_q.shape == z.shape
            assert tokens.shape == (2, t // cfg.downsample)
            assert tokens.max() < cfg.n_codes

    def test_straight_through_gradient(self):
        # the decoder input must carry d(output)/d(encoder) as if quantization
        # were the identity: grad wrt z of (z + (z_q - z).detach()) is 1
        cfg = VQConfig(modality="face", n_codes=4, code_dim=3, hidden=8)
        torch.manual_seed(1)
        ex = VQExpert(cfg)
        m = torch.randn(1, 8, cfg.in_dim, requires_grad=True)
        m_hat, z, z_q, _ = ex(m)
        m_hat.sum().backward()
        assert m.grad is not None and float(m.grad.abs().sum()) > 0

    def test_frame_count_must_divide(self):
        ex = VQExpert(VQConfig(modality="face", n_codes=4, code_dim=3, hidden=8))
        with pytest.raises(ShapeMismatchError):
            ex(torch.randn(1, 7, 56))

    def test_encode_pads_by_edge_replication(self):
        cfg = VQConfig(modality="face", n_codes=8, code_dim=4, hidden=8)
        torch.manual_seed(2)
        ex = VQExpert(cfg)
        m = np.random.default_rng(0).normal(size=(9, 56)).astype(np.float32)
        tokens, true_t = ex.encode(m)
        assert true_t == 9
        assert tokens.shape == (3,)  # ceil(9 / 4)
        padded, t = pad_to_multiple(torch.from_numpy(m), 4)
        assert t == 9 and padded.shape[0] == 12
        assert (padded[9:] == padded[8]).all()

    def test_decode_tokens_length(self):
        cfg = VQConfig(modality="hand", n_codes=8, code_dim=4, hidden=8)
        ex = VQExpert(cfg)
        out = ex.decode_tokens(np.array([0, 3, 7]))
        assert out.shape == (12, 180)


class TestVqLoss:
    def test_component_oracle(self):
        # hand-computed on a 3-frame, 2-channel toy in float64
        m = torch.tensor([[[0.0, 1.0], [2.0, 0.0], [1.0, 1.0]]], dtype=torch.float64)
        m_hat = torch.tensor([[[0.5, 1.0], [0.0, 0.0], [1.0, 3.0]]], dtype=torch.float64)
        z = torch.tensor([[[1.0, 0.0]]], dtype=torch.float64)
        z_q = torch.tensor([[[0.0, 0.5]]], dtype=torch.float64)
        total, parts = vq_loss(m, m_hat, z, z_q, alpha=0.5, beta=0.25)
        # smooth l1 (delta 1): 0.5x^2 if |x|<1 else |x|-0.5
        err = [0.125, 0.0, 1.5, 0.0, 0.0, 1.5]
        assert abs(parts["reconstruction"] - sum(err) / 6) < 1e-12
        dv_true = [[2.0, -1.0], [-1.0, 1.0]]
        dv_hat = [[-0.5, -1.0], [1.0, 3.0]]
        vel_terms = []
        for r_true, r_hat in zip(dv_true, dv_hat):
            for a, b in zip(r_true, r_hat):
                x = abs(a - b)
                vel_terms.append(0.5 * x * x if x < 1 else x - 0.5)
        assert abs(parts["velocity"] - sum(vel_terms) / 4) < 1e-12
        assert abs(parts["alignment"] - ((1.0 ** 2 + 0.5 ** 2) / 2)) < 1e-12
        assert abs(parts["commitment"] - ((1.0 ** 2 + 0.5 ** 2) / 2)) < 1e-12
        expect = parts["reconstruction"] + 0.5 * parts["velocity"] \
            + parts["alignment"] + 0.25 * parts["commitment"]
        assert abs(float(total) - expect) < 1e-12

    def test_alpha_zero_drops_velocity_from_total(self):
        torch.manual_seed(0)
        m, m_hat = torch.randn(2, 8, 4), torch.randn(2, 8, 4)
        z, z_q = torch.randn(2, 2, 3), torch.randn(2, 2, 3)
        t0, p0 = vq_loss(m, m_hat, z, z_q, alpha=0.0, beta=0.25)
        expect = p0["reconstruction"] + p0["alignment"] + 0.25 * p0["commitment"]
        assert abs(float(t0) - expect) < 1e-5

    def test_padded_frames_are_ignored(self):
        torch.manual_seed(0)
        m = torch.randn(1, 8, 4)
        m_hat = torch.randn(1, 8, 4)
        mask = torch.tensor([[True] * 6 + [False] * 2])
        t1, _ = vq_loss(m, m_hat, z := torch.randn(1, 2, 3), zq := torch.randn(1, 2, 3),
                        0.5, 0.25, frame_mask=mask)
        m_hat2 = m_hat.clone()
        m_hat2[0, 6:] = 99.0  # corrupt padding only
        t2, _ = vq_loss(m, m_hat2, z, zq, 0.5, 0.25, frame_mask=mask)
        assert float(t1) == float(t2)

    def test_gradient_targets(self):
        # alignment pulls only on the codebook side, commitment (scaled by
        # beta) only on the encoder side; reconstruction is zero here
        torch.manual_seed(0)
        z = torch.randn(1, 3, 4, requires_grad=True)
        z_q = torch.randn(1, 3, 4, requires_grad=True)
        m = torch.randn(1, 12, 5)
        total, _ = vq_loss(m, m.clone(), z, z_q, alpha=0.0, beta=0.25)
        gz, gq = torch.autograd.grad(total, [z, z_q])
        expect_gq = torch.autograd.grad(((z.detach() - z_q) ** 2).mean(), z_q)[0]
        expect_gz = torch.autograd.grad(
            (0.25 * ((z - z_q.detach()) ** 2)).mean(), z)[0]
        assert torch.allclose(gq, expect_gq, atol=1e-7)
        assert torch.allclose(gz, expect_gz, atol=1e-7)


class TestTraining:
    def test_memorizes_small_corpus(self, small_dataset):
        res = train_vqvae(small_dataset, VQConfig(modality="hand", ema=True),
                          VQTrainConfig(steps=180, batch_size=16, seed=0))
        assert res.history[-1]["reconstruction"] < 0.5 * res.history[0]["reconstruction"]

    def test_codebook_usage_with_reset(self, small_dataset):
        res = train_vqvae(small_dataset, VQConfig(modality="body", ema=True),
                          VQTrainConfig(steps=180, batch_size=16, seed=0))
        assert res.history[-1]["usage"] >= 0.20

    def test_deterministic(self, small_dataset):
        kw = dict(config=VQConfig(modality="face"),
                  train_config=VQTrainConfig(steps=30, batch_size=8, seed=4))
        a = train_vqvae(small_dataset, **kw)
        b = train_vqvae(small_dataset, **kw)
        for pa, pb in zip(a.expert.parameters(), b.expert.parameters()):
            assert (pa == pb).all()
        assert a.history == b.history

    def test_frozen_codebook_bytes_unchanged(self, small_dataset):
        cfg = VQConfig(modality="face", freeze_codebook=True)
        torch.manual_seed(7)
        probe = VQExpert(cfg)  # same init sequence as inside train_vqvae
        before = probe.codebook.embed.detach().numpy().tobytes()
        res = train_vqvae(small_dataset, cfg,
                          VQTrainConfig(steps=25, batch_size=8, seed=7))
        after = res.expert.codebook.embed.detach().numpy().tobytes()
        assert before == after

    def test_missing_modality_raises(self, small_dataset):
        from textmotion.clip import MotionDataset

        stripped = [c.with_tracks(hand=None) for c in small_dataset.clips]
        ds = MotionDataset(clips=stripped, splits=small_dataset.splits,
                           fps=small_dataset.fps)
        with pytest.raises(NoDataError):
            train_vqvae(ds, VQConfig(modality="hand"), VQTrainConfig(steps=5))

    def test_checkpoint_round_trip_and_resume(self, small_dataset, tmp_path):
        cfg = VQConfig(modality="face", n_codes=16)
        full = train_vqvae(small_dataset, cfg, VQTrainConfig(steps=24, seed=9),
                           out_dir=tmp_path / "full")
        half = train_vqvae(small_dataset, cfg, VQTrainConfig(steps=12, seed=9),
                           out_dir=tmp_path / "half")
        resumed = train_vqvae(small_dataset, cfg, VQTrainConfig(steps=24, seed=9),
                              out_dir=tmp_path / "half", resume=True)
        for pa, pb in zip(full.expert.parameters(), resumed.expert.parameters()):
            assert (pa == pb).all()
        assert [r["total"] for r in full.history] == [r["total"] for r in resumed.history]
        loaded = load_expert(tmp_path / "full")
        for pa, pb in zip(full.expert.parameters(), loaded.parameters()):
            assert (pa == pb).all()
        raw = np.fromfile(tmp_path / "full" / "codebook.f32", dtype="<f4")
        assert (raw.reshape(16, 32) == full.expert.codebook.embed.detach().numpy()).all()
        assert len(expert_fingerprint(tmp_path / "full")) == 64

    def test_tokens_to_motion_denormalizes(self, small_dataset):
        stats = train_norm_stats(small_dataset)
        res = train_vqvae(small_dataset, VQConfig(modality="body", n_codes=16),
                          VQTrainConfig(steps=10, batch_size=8), stats=stats)
        out = tokens_to_motion(res.expert, np.array([0, 5, 15]))
        assert out.shape == (12, 260) and out.dtype == np.float32
        norm = res.expert.decode_tokens(np.array([0, 5, 15]))
        manual = norm * (stats.std["body"] + stats.eps) + stats.mean["body"]
        assert np.allclose(out, manual.astype(np.float32), atol=1e-5)
        with pytest.raises(InvalidTokenError):
            tokens_to_motion(res.expert, np.array([0, 16]))
