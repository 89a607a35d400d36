"""Fixed feature extractors backing the metric suite.

A text head and one recurrent head per modality are trained jointly with
a margin contrastive objective so that captions and all three motion
streams of the same clip land close together in a shared feature space.
After training the networks are frozen and fingerprinted; every metric
report embeds the fingerprint so numbers from different extractor fits
are never compared silently.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, asdict

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from ..clip import MotionDataset, NormStats
from ..errors import ConfigError, NoDataError
from ..pose import MODALITY_DIMS
from ..preprocess import train_norm_stats
from ..textenc import HashedBowEncoder, TEXT_FEATURE_WIDTH

FEATURE_DIM = 32


@dataclass
class EvalExtractorConfig:
    feature_dim: int = FEATURE_DIM
    hidden: int = 64
    margin: float = 5.0
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    split: str = "train"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalExtractorConfig":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown EvalExtractorConfig keys: {sorted(extra)}")
        return cls(**d)


class _MotionHead(nn.Module):
    def __init__(self, in_dim: int, hidden: int, out_dim: int):
        super().__init__()
        self.gru = nn.GRU(in_dim, hidden, batch_first=True)
        self.out = nn.Linear(hidden, out_dim)

    def forward(self, padded: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        packed = nn.utils.rnn.pack_padded_sequence(
            padded, lengths.cpu(), batch_first=True, enforce_sorted=False)
        _, h = self.gru(packed)
        return self.out(h[-1])


class _TextHead(nn.Module):
    def __init__(self, in_dim: int, hidden: int, out_dim: int):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(in_dim, hidden), nn.ReLU(),
                                 nn.Linear(hidden, out_dim))

    def forward(self, x):
        return self.net(x)


class EvalFeatureExtractors(nn.Module):
    """Frozen text + per-modality motion encoders in one feature space."""

    def __init__(self, config: EvalExtractorConfig, stats: NormStats):
        super().__init__()
        self.config = config
        self.stats = stats
        self.encoder = HashedBowEncoder(TEXT_FEATURE_WIDTH)
        self.text_head = _TextHead(TEXT_FEATURE_WIDTH, config.hidden, config.feature_dim)
        self.motion_heads = nn.ModuleDict({
            mod: _MotionHead(dim, config.hidden, config.feature_dim)
            for mod, dim in MODALITY_DIMS.items()})
        self.fingerprint = ""

    def freeze(self):
        self.eval()
        for p in self.parameters():
            p.requires_grad_(False)
        blob = b"".join(t.numpy().tobytes() for t in self.state_dict().values())
        self.fingerprint = hashlib.sha256(blob).hexdigest()
        return self

    @torch.no_grad()
    def text_features(self, texts: list[str]) -> np.ndarray:
        bow = torch.from_numpy(self.encoder.featurize(texts))
        return self.text_head(bow).numpy().astype(np.float64)

    @torch.no_grad()
    def motion_features(self, tracks: list[np.ndarray], modality: str,
                        batch_size: int = 64) -> np.ndarray:
        """Embed raw (physical-unit) tracks of one modality."""
        out = np.empty((len(tracks), self.config.feature_dim))
        for lo in range(0, len(tracks), batch_size):
            chunk = [self.stats.normalize(t, modality) for t in tracks[lo:lo + batch_size]]
            lengths = torch.tensor([c.shape[0] for c in chunk])
            padded = torch.zeros(len(chunk), int(lengths.max()), chunk[0].shape[1])
            for i, c in enumerate(chunk):
                padded[i, :c.shape[0]] = torch.from_numpy(c)
            out[lo:lo + len(chunk)] = self.motion_heads[modality](
                padded, lengths).numpy()
        return out

    @torch.no_grad()
    def clip_features(self, clips, modalities: tuple[str, ...] = ("body", "hand", "face"),
                      combine: str = "mean") -> np.ndarray:
        """Mean of the available per-modality features for each clip-like
        object (anything with .body / .hand / .face arrays)."""
        assert combine == "mean"
        total = np.zeros((len(clips), self.config.feature_dim))
        counts = np.zeros((len(clips), 1))
        for mod in modalities:
            idx = [i for i, c in enumerate(clips) if getattr(c, mod) is not None]
            if not idx:
                continue
            feats = self.motion_features([getattr(clips[i], mod) for i in idx], mod)
            total[idx] += feats
            counts[idx] += 1
        if (counts == 0).any():
            raise NoDataError("a clip has none of the requested tracks")
        return total / counts


def _contrastive(a: torch.Tensor, b: torch.Tensor, margin: float,
                 perm: torch.Tensor) -> torch.Tensor:
    """Pull aligned rows together, push each row from one shuffled partner."""
    pos = ((a - b) ** 2).sum(dim=1)
    neg = torch.linalg.vector_norm(a - b[perm], dim=1)
    keep = perm != torch.arange(perm.shape[0])
    push = F.relu(margin - neg).pow(2)[keep]
    return pos.mean() + (push.mean() if keep.any() else pos.new_zeros(()))


def train_eval_extractors(dataset: MotionDataset, config: EvalExtractorConfig | None = None,
                          stats: NormStats | None = None) -> EvalFeatureExtractors:
    """Fit and freeze the metric feature space on the train split.

    Alignment terms: caption to each annotated track, plus pairwise
    cross-modal terms on co-annotated clips.  Deterministic in the seed.
    """
    cfg = config or EvalExtractorConfig()
    stats = stats or train_norm_stats(dataset)
    ids = dataset.splits.get(cfg.split, [])
    clips = [dataset.get(i) for i in ids]
    if len(clips) < 2:
        raise NoDataError("need at least two clips to form retrieval negatives")

    torch.manual_seed(cfg.seed)
    model = EvalFeatureExtractors(cfg, stats)
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    norm_cache = {
        (c.id, mod): torch.from_numpy(stats.normalize(c.track(mod), mod))
        for c in clips for mod in ("body", "hand", "face") if c.track(mod) is not None}

    model.train()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(clips))
        for lo in range(0, len(order), cfg.batch_size):
            batch = [clips[i] for i in order[lo:lo + cfg.batch_size]]
            if len(batch) < 2:
                continue
            texts = [c.texts[int(rng.integers(len(c.texts)))] for c in batch]
            bow = torch.from_numpy(model.encoder.featurize(texts))
            text_f = model.text_head(bow)
            feats: dict[str, torch.Tensor] = {}
            rows: dict[str, list[int]] = {}
            for mod in ("body", "hand", "face"):
                idx = [i for i, c in enumerate(batch) if c.track(mod) is not None]
                rows[mod] = idx
                if len(idx) < 2:
                    continue
                tracks = [norm_cache[(batch[i].id, mod)] for i in idx]
                lengths = torch.tensor([t.shape[0] for t in tracks])
                padded = torch.zeros(len(idx), int(lengths.max()), tracks[0].shape[1])
                for r, t in enumerate(tracks):
                    padded[r, :t.shape[0]] = t
                feats[mod] = model.motion_heads[mod](padded, lengths)
            loss = text_f.new_zeros(())
            for mod, f in feats.items():
                perm = torch.from_numpy(rng.permutation(f.shape[0]))
                loss = loss + _contrastive(text_f[rows[mod]], f, cfg.margin, perm)
            for a, b in (("body", "hand"), ("body", "face"), ("hand", "face")):
                if a not in feats or b not in feats:
                    continue
                common = [i for i in rows[a] if i in set(rows[b])]
                if len(common) < 2:
                    continue
                ia = [rows[a].index(i) for i in common]
                ib = [rows[b].index(i) for i in common]
                perm = torch.from_numpy(rng.permutation(len(common)))
                loss = loss + _contrastive(feats[a][ia], feats[b][ib], cfg.margin, perm)
            opt.zero_grad()
            loss.backward()
            opt.step()
    return model.freeze()
