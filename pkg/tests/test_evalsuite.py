import numpy as np
import pytest

from textmotion.errors import ContractViolationError, NoDataError, ShapeMismatchError
from textmotion.evalsuite import (modality_matching_eval, text_to_motion_eval,
                                  train_eval_extractors)
from textmotion.evalsuite.extractors import EvalExtractorConfig
from textmotion.evalsuite.metrics import (FidResult, diversity, fid, mm_dist,
                                          multimodality, r_precision)
from textmotion.preprocess import train_norm_stats
from textmotion.synthetic import SyntheticSpec, make_synthetic_dataset


class TestFid:
    def test_self_distance_is_zero(self):
        a = np.random.default_rng(0).normal(size=(200, 16))
        assert abs(fid(a, a).value) < 1e-6

    def test_mean_shift_closed_form(self):
        rng = np.random.default_rng(1)
        a = rng.normal(0.0, 1.0, size=(30000, 1))
        b = rng.normal(1.0, 1.0, size=(30000, 1))
        assert abs(fid(a, b).value - 1.0) < 0.05

    def test_variance_gap_closed_form(self):
        # (sigma_a - sigma_b)^2 = (1 - 2)^2 = 1
        rng = np.random.default_rng(2)
        a = rng.normal(0.0, 1.0, size=(30000, 1))
        b = rng.normal(0.0, 2.0, size=(30000, 1))
        assert abs(fid(a, b).value - 1.0) < 0.05

    def test_diagonal_gaussian_closed_form(self):
        rng = np.random.default_rng(3)
        mu = np.array([1.0, -2.0, 0.5])
        sig = np.array([1.0, 0.5, 2.0])
        a = rng.normal(0.0, 1.0, size=(60000, 3))
        b = rng.normal(mu, sig, size=(60000, 3))
        expect = float((mu ** 2).sum() + ((1.0 - sig) ** 2).sum())
        assert abs(fid(a, b).value - expect) < 0.1

    def test_rank_deficient_features_still_finite(self):
        # more dimensions than rows forces eigenvalue clipping
        rng = np.random.default_rng(4)
        a = rng.normal(size=(10, 32))
        b = rng.normal(size=(12, 32))
        res = fid(a, b)
        assert np.isfinite(res.value) and res.eig_clip >= 0.0
        assert (res.n_a, res.n_b) == (10, 12)

    def test_guards(self):
        with pytest.raises(NoDataError):
            fid(np.zeros((1, 4)), np.zeros((5, 4)))
        with pytest.raises(ShapeMismatchError):
            fid(np.zeros((5, 4)), np.zeros((5, 3)))

    def test_float_coercion(self):
        res = FidResult(value=1.25, eig_clip=0.0, n_a=2, n_b=2)
        assert float(res) == 1.25


class TestDiversity:
    def test_two_rows_exact(self):
        f = np.array([[0.0, 0.0], [3.0, 4.0]])
        with pytest.warns(UserWarning, match="reduced"):
            res = diversity(f, n_pairs=300, seed=0)
        assert res.n_pairs == 1 and abs(res.value - 5.0) < 1e-12

    def test_pairs_are_disjoint(self):
        # constant features except one outlier: the outlier can join at
        # most one pair, so the mean is bounded by outlier_dist / m
        f = np.zeros((40, 2))
        f[7] = [100.0, 0.0]
        res = diversity(f, n_pairs=20, seed=1)
        assert res.value <= 100.0 / 20 + 1e-9

    def test_deterministic(self):
        f = np.random.default_rng(5).normal(size=(50, 4))
        assert diversity(f, 10, seed=3).value == diversity(f, 10, seed=3).value

    def test_too_few_rows(self):
        with pytest.raises(NoDataError):
            diversity(np.zeros((1, 3)))


class TestMultimodality:
    def test_two_generations_exact(self):
        by_text = {"wave": np.array([[0.0, 0.0], [0.0, 2.0]]),
                   "bow": np.array([[1.0, 1.0]])}  # skipped: single row
        res = multimodality(by_text, n_pairs=8, seed=0)
        assert res.n_texts == 1 and abs(res.value - 2.0) < 1e-12

    def test_identical_generations_zero(self):
        by_text = {"a": np.ones((4, 3)), "b": np.zeros((3, 3))}
        assert multimodality(by_text, seed=0).value == 0.0

    def test_all_singletons_raise(self):
        with pytest.raises(NoDataError):
            multimodality({"a": np.ones((1, 3))})


class TestMmDist:
    def test_exact(self):
        q = np.array([[0.0, 0.0], [1.0, 1.0]])
        t = np.array([[3.0, 4.0], [1.0, 1.0]])
        assert abs(mm_dist(q, t) - 2.5) < 1e-12

    def test_guards(self):
        with pytest.raises(ShapeMismatchError):
            mm_dist(np.zeros((2, 3)), np.zeros((3, 3)))
        with pytest.raises(NoDataError):
            mm_dist(np.zeros((0, 3)), np.zeros((0, 3)))


class TestRPrecision:
    def test_perfect_alignment(self):
        f = np.random.default_rng(0).normal(size=(64, 8))
        res = r_precision(f, f, pool_size=16, repetitions=5, seed=0)
        assert res.top1 == res.top2 == res.top3 == 1.0

    def test_monotone_in_k(self):
        rng = np.random.default_rng(1)
        q = rng.normal(size=(96, 6))
        g = q + rng.normal(scale=2.0, size=q.shape)
        res = r_precision(q, g, pool_size=8, repetitions=10, seed=0)
        assert res.top1 <= res.top2 <= res.top3

    def test_chance_level_when_unrelated(self):
        rng = np.random.default_rng(42)
        q = rng.normal(size=(256, 8))
        g = rng.normal(size=(256, 8))
        res = r_precision(q, g, pool_size=8, repetitions=30, seed=0)
        assert 0.125 - 0.05 < res.top1 < 0.125 + 0.05

    def test_pool_reduction_warns(self):
        f = np.random.default_rng(2).normal(size=(10, 4))
        with pytest.warns(UserWarning, match="pool reduced"):
            res = r_precision(f, f, pool_size=32, repetitions=3, seed=0)
        assert res.pool_size == 10 and res.n_pools == 1

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        q, g = rng.normal(size=(50, 4)), rng.normal(size=(50, 4))
        a = r_precision(q, g, 10, 5, seed=9)
        b = r_precision(q, g, 10, 5, seed=9)
        assert (a.top1, a.top2, a.top3) == (b.top1, b.top2, b.top3)

    def test_too_few_rows(self):
        with pytest.raises(NoDataError):
            r_precision(np.zeros((1, 3)), np.zeros((1, 3)))


@pytest.fixture(scope="module")
def corpus():
    ds = make_synthetic_dataset(SyntheticSpec(n_clips=48, seed=7))
    return ds, train_norm_stats(ds)


@pytest.fixture(scope="module")
def extractors(corpus):
    ds, stats = corpus
    return train_eval_extractors(ds, EvalExtractorConfig(epochs=16, seed=1), stats)


class TestExtractors:
    def test_frozen_and_fingerprinted(self, extractors):
        assert len(extractors.fingerprint) == 64
        assert all(not p.requires_grad for p in extractors.parameters())

    def test_deterministic_fit(self, corpus):
        ds, stats = corpus
        cfg = EvalExtractorConfig(epochs=2, seed=4)
        a = train_eval_extractors(ds, cfg, stats)
        b = train_eval_extractors(ds, cfg, stats)
        assert a.fingerprint == b.fingerprint
        c = train_eval_extractors(ds, EvalExtractorConfig(epochs=2, seed=5), stats)
        assert c.fingerprint != a.fingerprint

    def test_memorized_retrieval_beats_chance(self, corpus, extractors):
        ds, _ = corpus
        clips = [ds.get(i) for i in ds.splits["train"]]
        motion = extractors.clip_features(clips)
        text = extractors.text_features([c.texts[0] for c in clips])
        res = r_precision(motion, text, pool_size=8, repetitions=10, seed=0)
        assert res.top1 > 2.0 / 8

    def test_batching_invariance(self, corpus, extractors):
        ds, _ = corpus
        tracks = [ds.get(i).body for i in ds.splits["train"][:6]]
        a = extractors.motion_features(tracks, "body", batch_size=2)
        b = extractors.motion_features(tracks, "body", batch_size=64)
        assert np.allclose(a, b, atol=1e-5)

    def test_clip_features_average_available_tracks(self, corpus, extractors):
        ds, _ = corpus
        clip = next(ds.get(i) for i in ds.splits["train"]
                    if ds.get(i).hand is None and ds.get(i).face is not None)
        feats = extractors.clip_features([clip])
        body = extractors.motion_features([clip.body], "body")
        face = extractors.motion_features([clip.face], "face")
        assert np.allclose(feats, (body + face) / 2, atol=1e-9)

    def test_clip_features_empty_tracks_raise(self, extractors):
        class Bare:
            body = hand = face = None
        with pytest.raises(NoDataError):
            extractors.clip_features([Bare()])


class _FakeGen:
    """Real clip tracks re-labeled as a generated motion."""

    def __init__(self, clip, fallback):
        self.text = clip.texts[0]
        self.body = clip.body
        self.hand = clip.hand if clip.hand is not None else fallback.hand
        self.face = clip.face if clip.face is not None else fallback.face


@pytest.fixture(scope="module")
def fake_generated(corpus):
    ds, _ = corpus
    clips = [ds.get(i) for i in ds.splits["train"]]
    donor = next(c for c in clips if c.hand is not None and c.face is not None)
    return [_FakeGen(c, donor) for c in clips[:24]]


class TestSuites:
    def test_t2m_report_structure(self, corpus, extractors, fake_generated):
        ds, _ = corpus
        clips = [ds.get(i) for i in ds.splits["train"]]
        rep = text_to_motion_eval(fake_generated, clips, extractors, seed=0,
                                  pool_size=8, repetitions=3, diversity_pairs=10,
                                  mmod_pairs=4)
        assert set(rep.rows) == {"real", "generated"}
        for row in rep.rows.values():
            assert set(row) >= {"r_precision", "fid", "mm_dist", "diversity",
                                "multimodality", "n"}
        assert rep.extractor_fingerprint == extractors.fingerprint
        csv = rep.to_csv().strip().split("\n")
        assert len(csv) == 3 and csv[0].startswith("method,rprec_top1")
        assert rep.to_json() == text_to_motion_eval(
            fake_generated, clips, extractors, seed=0, pool_size=8,
            repetitions=3, diversity_pairs=10, mmod_pairs=4).to_json()

    def test_t2m_empty_generation_rejected(self, corpus, extractors):
        ds, _ = corpus
        clips = [ds.get(i) for i in ds.splits["train"]]
        with pytest.raises(NoDataError):
            text_to_motion_eval([], clips, extractors)

    def test_matching_report_structure(self, corpus, extractors, fake_generated):
        ds, _ = corpus
        clips = [ds.get(i) for i in ds.splits["train"]]
        rep = modality_matching_eval(fake_generated, extractors, clips, seed=0,
                                     pool_size=8, repetitions=3)
        assert set(rep.rows) == {"body-hand", "body-face", "hand-face"}
        for row in rep.rows.values():
            assert 0.0 <= row["forward"]["top1"] <= 1.0
            assert 0.0 <= row["reverse"]["top1"] <= 1.0
            assert np.isfinite(row["mm_dist"])
        csv = rep.to_csv().strip().split("\n")
        assert len(csv) == 4 and csv[0].startswith("pair,fwd_top1")

    def test_matching_needs_all_streams(self, corpus, extractors):
        ds, _ = corpus
        clips = [ds.get(i) for i in ds.splits["train"]]
        partial = next(c for c in clips if c.hand is None)
        with pytest.raises(ContractViolationError):
            modality_matching_eval([partial], extractors, clips)
