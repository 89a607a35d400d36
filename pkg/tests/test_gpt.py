import numpy as np
import pytest
import torch
import torch.nn.functional as F

from textmotion.batching import (TokenizedClip, collate, make_batches,
                                 tokenize_dataset)
from textmotion.errors import (ConfigError, ContractViolationError, LengthError,
                               NoDataError, ShapeMismatchError)
from textmotion.gpt import GPTConfig, MultiIndexGPT, gpt_loss
from textmotion.preprocess import train_norm_stats
from textmotion.synthetic import SyntheticSpec, make_synthetic_dataset
from textmotion.textenc import HashedBowEncoder
from textmotion.vqvae import VQConfig, VQExpert


def tiny_config(**kw) -> GPTConfig:
    base = dict(d_model=16, n_heads=2, n_base_layers=1, n_branch_layers=1,
                text_width=24, max_tokens=12, n_body_codes=8, n_hand_codes=6,
                n_face_codes=5, body_code_dim=4)
    base.update(kw)
    return GPTConfig(**base)


def tiny_model(seed=0, **kw) -> MultiIndexGPT:
    torch.manual_seed(seed)
    cfg = tiny_config(**kw)
    book = torch.randn(cfg.n_body_codes, cfg.body_code_dim)
    return MultiIndexGPT(cfg, book).eval()


class TestConfig:
    def test_divisibility_guard(self):
        with pytest.raises(ConfigError):
            GPTConfig(d_model=10, n_heads=4)

    def test_end_ids(self):
        cfg = tiny_config()
        assert cfg.end_id("body") == 8
        assert cfg.end_id("hand") == 6
        assert cfg.n_codes("face") == 5

    def test_from_dict_rejects_unknown(self):
        with pytest.raises(ConfigError):
            GPTConfig.from_dict({"d_model": 64, "bogus": 1})


class TestForward:
    def test_output_shapes(self):
        model = tiny_model()
        feats = torch.randn(3, 24)
        prefix = torch.randint(0, 8, (3, 5))
        out = model(feats, prefix)
        assert set(out) == {"body", "hand", "face"}
        assert out["body"].shape == (3, 6, 9)
        assert out["hand"].shape == (3, 6, 7)
        assert out["face"].shape == (3, 6, 6)

    def test_empty_prefix(self):
        model = tiny_model()
        out = model(torch.randn(2, 24), torch.zeros(2, 0, dtype=torch.long))
        assert out["body"].shape == (2, 1, 9)

    def test_future_tokens_cannot_leak(self):
        # bitwise: row i sees text + tokens up to i only
        model = tiny_model(seed=3)
        feats = torch.randn(1, 24)
        prefix = torch.randint(0, 8, (1, 7))
        with torch.no_grad():
            base = model(feats, prefix)
        for j in (2, 4, 6):
            changed = prefix.clone()
            changed[0, j] = (changed[0, j] + 3) % 8
            with torch.no_grad():
                out = model(feats, changed)
            for mod in ("body", "hand", "face"):
                assert torch.equal(out[mod][0, : j + 1], base[mod][0, : j + 1])
                assert not torch.equal(out[mod][0, j + 1:], base[mod][0, j + 1:])

    def test_length_guard(self):
        model = tiny_model()
        with pytest.raises(LengthError):
            model(torch.randn(1, 24), torch.zeros(1, 13, dtype=torch.long))

    def test_shape_guards(self):
        model = tiny_model()
        with pytest.raises(ShapeMismatchError):
            model(torch.randn(1, 23), torch.zeros(1, 2, dtype=torch.long))
        with pytest.raises(ShapeMismatchError):
            model(torch.randn(2, 24), torch.zeros(1, 2, dtype=torch.long))

    def test_end_token_embedding(self):
        model = tiny_model()
        emb = model.embed_body_tokens(torch.tensor([[8, 2]]))
        assert torch.equal(emb[0, 0], model.end_embed)
        expect = model.code_proj(model.body_codebook[2])
        assert torch.allclose(emb[0, 1], expect, atol=1e-6)
        with pytest.raises(ShapeMismatchError):
            model.embed_body_tokens(torch.tensor([[9]]))

    def test_frozen_codebook_receives_no_gradient(self):
        model = tiny_model()
        out = model(torch.randn(1, 24), torch.randint(0, 8, (1, 4)))
        sum(v.sum() for v in out.values()).backward()
        assert model.body_codebook.grad is None
        assert model.code_proj.weight.grad is not None


def _loss_fixture(seed=0):
    torch.manual_seed(seed)
    logits = {m: torch.randn(2, 4, 5) for m in ("body", "hand", "face")}
    targets = {m: torch.randint(0, 5, (2, 4)) for m in ("body", "hand", "face")}
    lengths = torch.tensor([2, 3])
    masks = {"body": torch.tensor([True, True]),
             "hand": torch.tensor([True, False]),
             "face": torch.tensor([False, True])}
    return logits, targets, lengths, masks


class TestLoss:
    def test_matches_manual_average(self):
        logits, targets, lengths, masks = _loss_fixture()
        total, parts = gpt_loss(logits, targets, lengths, masks,
                                eta_hand=2.0, eta_face=3.0)
        manual = {}
        for mod in ("body", "hand", "face"):
            terms = []
            for b in range(2):
                if not masks[mod][b]:
                    continue
                for t in range(int(lengths[b]) + 1):
                    lp = F.log_softmax(logits[mod][b, t], dim=-1)
                    terms.append(-float(lp[targets[mod][b, t]]))
            manual[mod] = sum(terms) / len(terms)
            assert abs(parts[mod] - manual[mod]) < 1e-5
        expect = manual["body"] + 2.0 * manual["hand"] + 3.0 * manual["face"]
        assert abs(float(total) - expect) < 1e-5

    def test_masked_entries_cannot_perturb(self):
        logits, targets, lengths, masks = _loss_fixture()
        t1, p1 = gpt_loss(logits, targets, lengths, masks)
        # corrupt everything outside the supervised region
        logits2 = {m: v.clone() for m, v in logits.items()}
        targets2 = {m: v.clone() for m, v in targets.items()}
        logits2["body"][0, 3] = 1e6          # past sample 0's End row
        targets2["body"][0, 3] = 4
        logits2["hand"][1] = -1e6            # sample 1 has no hand annotation
        targets2["hand"][1] = 0
        logits2["face"][0] = float("nan")    # sample 0 has no face annotation
        t2, p2 = gpt_loss(logits2, targets2, lengths, masks)
        assert float(t1) == float(t2) and p1 == p2

    def test_zero_weights_drop_branches(self):
        logits, targets, lengths, masks = _loss_fixture()
        total, parts = gpt_loss(logits, targets, lengths, masks,
                                eta_hand=0.0, eta_face=0.0)
        assert float(total) == parts["body"]

    def test_unrepresented_branch_raises(self):
        logits, targets, lengths, masks = _loss_fixture()
        masks["hand"] = torch.tensor([False, False])
        with pytest.raises(ContractViolationError):
            gpt_loss(logits, targets, lengths, masks)


def _stub(i: int, n: int, hand: bool, face: bool) -> TokenizedClip:
    body = np.arange(n) % 8
    return TokenizedClip(clip_id=f"c{i}", texts=[f"text {i}", f"alt {i}"],
                         body=body, hand=body.copy() if hand else None,
                         face=body.copy() if face else None, n_frames=4 * n)


class TestBatches:
    def test_exact_partition_with_coverage(self):
        rng = np.random.default_rng(0)
        samples = [_stub(i, int(rng.integers(2, 9)),
                         hand=i % 3 == 0, face=i % 4 == 0) for i in range(30)]
        batches = make_batches(samples, batch_size=6, seed=1)
        flat = sorted(i for b in batches for i in b)
        assert flat == list(range(30))
        for b in batches:
            assert any(samples[i].has("hand") for i in b)
            assert any(samples[i].has("face") for i in b)

    def test_deterministic_in_seed(self):
        samples = [_stub(i, 4, hand=i % 2 == 0, face=i % 2 == 1) for i in range(20)]
        assert make_batches(samples, 5, seed=3) == make_batches(samples, 5, seed=3)
        assert make_batches(samples, 5, seed=3) != make_batches(samples, 5, seed=4)

    def test_tail_batch_kept(self):
        samples = [_stub(i, 4, True, True) for i in range(10)]
        batches = make_batches(samples, 4, seed=0)
        assert sorted(len(b) for b in batches) == [2, 4, 4]

    def test_no_needs_is_plain_partition(self):
        samples = [_stub(i, 4, False, False) for i in range(7)]
        batches = make_batches(samples, 3, seed=0, needs=())
        assert sorted(i for b in batches for i in b) == list(range(7))

    def test_absent_modality_raises(self):
        samples = [_stub(i, 4, hand=False, face=True) for i in range(8)]
        with pytest.raises(NoDataError):
            make_batches(samples, 4, seed=0)

    def test_infeasible_coverage_raises(self):
        # one hand sample cannot cover three batches
        samples = [_stub(i, 4, hand=i == 0, face=True) for i in range(12)]
        with pytest.raises(ContractViolationError):
            make_batches(samples, 4, seed=0)

    def test_empty_sample_list_raises(self):
        with pytest.raises(NoDataError):
            make_batches([], 4, seed=0)


@pytest.fixture(scope="module")
def setup():
    ds = make_synthetic_dataset(SyntheticSpec(n_clips=24, seed=5))
    stats = train_norm_stats(ds)
    torch.manual_seed(0)
    experts = {m: VQExpert(VQConfig(modality=m, n_codes=8, code_dim=4, hidden=8)).eval()
               for m in ("body", "hand", "face")}
    return ds, stats, experts


class TestTokenize:
    def test_streams_align(self, setup):
        ds, stats, experts = setup
        toks = tokenize_dataset(experts, ds, stats, "train")
        assert len(toks) == len(ds.splits["train"])
        for t in toks:
            n = t.n_tokens
            clip = ds.get(t.clip_id)
            assert n == -(-clip.body.shape[0] // 4)  # ceil division
            for mod in ("hand", "face"):
                stream = getattr(t, mod)
                assert (stream is None) == (clip.track(mod) is None)
                if stream is not None:
                    assert stream.shape[0] == n

    def test_truncation(self, setup):
        ds, stats, experts = setup
        toks = tokenize_dataset(experts, ds, stats, "train", max_tokens=5)
        assert max(t.n_tokens for t in toks) == 5

    def test_empty_split_raises(self, setup):
        ds, stats, experts = setup
        with pytest.raises(NoDataError):
            tokenize_dataset(experts, ds, stats, "nope")


class TestCollate:
    def test_padding_and_masks(self):
        samples = [_stub(0, 2, hand=True, face=False),
                   _stub(1, 4, hand=False, face=True)]
        end_ids = {"body": 8, "hand": 6, "face": 5}
        batch = collate(samples, [0, 1], HashedBowEncoder(), end_ids)
        assert batch.prefix.shape == (2, 4)
        assert batch.prefix[0].tolist() == [0, 1, 8, 8]
        assert batch.targets["body"].shape == (2, 5)
        assert batch.targets["body"][0].tolist() == [0, 1, 8, 8, 8]
        assert batch.targets["hand"][0].tolist() == [0, 1, 6, 6, 6]
        assert batch.targets["face"][0].tolist() == [5] * 5
        assert batch.targets["face"][1].tolist() == [0, 1, 2, 3, 5]
        assert batch.masks["body"].tolist() == [True, True]
        assert batch.masks["hand"].tolist() == [True, False]
        assert batch.masks["face"].tolist() == [False, True]
        assert batch.lengths.tolist() == [2, 4]
        assert batch.text_feat.shape == (2, 512)

    def test_caption_variants(self):
        samples = [_stub(0, 3, True, True)]
        enc = HashedBowEncoder()
        end_ids = {"body": 8, "hand": 6, "face": 5}
        a = collate(samples, [0], enc, end_ids)
        expect = enc.featurize(["text 0"])
        assert np.allclose(a.text_feat.numpy(), expect)
        picks = set()
        rng = np.random.default_rng(0)
        for _ in range(16):
            b = collate(samples, [0], enc, end_ids, text_rng=rng)
            first = enc.featurize(["text 0"])
            picks.add(bool(np.allclose(b.text_feat.numpy(), first)))
        assert picks == {True, False}  # both caption variants drawn
