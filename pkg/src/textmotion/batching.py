"""Tokenized training samples and modality-aware batch construction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .clip import MotionDataset, NormStats
from .errors import ContractViolationError, NoDataError, ShapeMismatchError
from .textenc import TextEncoder
from .vqvae import VQExpert

NEEDED = ("hand", "face")


@dataclass
class TokenizedClip:
    """One clip reduced to code indices; hand/face are None when unannotated."""

    clip_id: str
    texts: list[str]
    body: np.ndarray
    hand: np.ndarray | None
    face: np.ndarray | None
    n_frames: int

    @property
    def n_tokens(self) -> int:
        return int(self.body.shape[0])

    def has(self, modality: str) -> bool:
        return modality == "body" or getattr(self, modality) is not None


def tokenize_dataset(experts: dict[str, VQExpert], dataset: MotionDataset,
                     stats: NormStats, split: str,
                     max_tokens: int = 128) -> list[TokenizedClip]:
    """Run every split clip through its experts once; results are reused
    across epochs.  Streams of one clip always agree in length because the
    experts share the temporal downsample rate."""
    ids = dataset.splits.get(split, [])
    if not ids:
        raise NoDataError(f"split {split!r} is empty")
    out = []
    for cid in ids:
        clip = dataset.get(cid)
        toks: dict[str, np.ndarray | None] = {}
        for mod in ("body", "hand", "face"):
            arr = clip.track(mod)
            if arr is None:
                toks[mod] = None
                continue
            codes, _ = experts[mod].encode(stats.normalize(arr, mod))
            toks[mod] = codes[:max_tokens]
        lengths = {m: t.shape[0] for m, t in toks.items() if t is not None}
        if len(set(lengths.values())) != 1:
            raise ShapeMismatchError(f"clip {cid}: unequal token lengths {lengths}")
        out.append(TokenizedClip(clip_id=cid, texts=list(clip.texts), body=toks["body"],
                                 hand=toks["hand"], face=toks["face"],
                                 n_frames=clip.body.shape[0]))
    return out


def make_batches(samples: list[TokenizedClip], batch_size: int, seed: int,
                 needs: tuple[str, ...] = NEEDED) -> list[list[int]]:
    """Partition sample indices into batches covering every needed modality.

    Each epoch is an exact partition (every sample appears once; the tail
    batch may be short).  A deterministic swap repair guarantees each
    batch keeps at least one sample per needed modality; datasets missing
    a needed modality entirely raise NoDataError.
    """
    if not samples:
        raise NoDataError("no training samples")
    for mod in needs:
        if not any(s.has(mod) for s in samples):
            raise NoDataError(f"no sample annotated with {mod}")
    order = [int(i) for i in np.random.default_rng(seed).permutation(len(samples))]
    batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if not needs:
        return batches

    def count(batch: list[int], mod: str) -> int:
        return sum(1 for i in batch if samples[i].has(mod))

    def movable_out(batch: list[int], mod: str) -> int | None:
        """Donor sample with mod whose other needed counts survive its exit."""
        for i in batch:
            if not samples[i].has(mod):
                continue
            if count(batch, mod) < 2:
                continue
            if all(count(batch, m2) >= 2 for m2 in needs
                   if m2 != mod and samples[i].has(m2)):
                return i
        return None

    def swappable_in(batch: list[int], mod: str) -> int | None:
        """Receiver-side sample lacking mod that is safe to give away."""
        for i in batch:
            if samples[i].has(mod):
                continue
            if all(count(batch, m2) >= 2 for m2 in needs if samples[i].has(m2)):
                return i
        return None

    for _ in range(4 * len(batches) * len(needs)):
        deficit = next(((bi, mod) for bi, b in enumerate(batches) for mod in needs
                        if count(b, mod) == 0), None)
        if deficit is None:
            break
        bi, mod = deficit
        fixed = False
        for dj, donor in enumerate(batches):
            if dj == bi:
                continue
            give = movable_out(donor, mod)
            take = swappable_in(batches[bi], mod)
            if give is not None and take is not None:
                donor[donor.index(give)] = take
                batches[bi][batches[bi].index(take)] = give
                fixed = True
                break
        if not fixed:
            raise ContractViolationError(
                f"cannot guarantee a {mod}-annotated sample in every batch")
    else:
        raise ContractViolationError("batch repair did not converge")
    return batches


@dataclass
class TrainingBatch:
    clip_ids: list[str]
    text_feat: torch.Tensor          # (B, W) float32
    prefix: torch.Tensor             # (B, S) long, padded with the body End id
    targets: dict[str, torch.Tensor]  # (B, S+1) long per modality
    lengths: torch.Tensor            # (B,) token counts
    masks: dict[str, torch.Tensor]   # (B,) bool per modality


def collate(samples: list[TokenizedClip], index_batch: list[int],
            encoder: TextEncoder, end_ids: dict[str, int],
            text_rng: np.random.Generator | None = None) -> TrainingBatch:
    """Assemble padded tensors; one caption variant is drawn per sample."""
    chosen = [samples[i] for i in index_batch]
    lengths = torch.tensor([s.n_tokens for s in chosen], dtype=torch.long)
    s_max = int(lengths.max())
    texts = []
    for s in chosen:
        k = 0 if text_rng is None else int(text_rng.integers(len(s.texts)))
        texts.append(s.texts[k])
    prefix = torch.full((len(chosen), s_max), end_ids["body"], dtype=torch.long)
    targets = {m: torch.full((len(chosen), s_max + 1), end_ids[m], dtype=torch.long)
               for m in ("body", "hand", "face")}
    masks = {m: torch.zeros(len(chosen), dtype=torch.bool) for m in ("body", "hand", "face")}
    for row, s in enumerate(chosen):
        t = s.n_tokens
        prefix[row, :t] = torch.from_numpy(s.body.astype(np.int64))
        for mod in ("body", "hand", "face"):
            stream = s.body if mod == "body" else getattr(s, mod)
            if stream is None:
                continue
            targets[mod][row, :t] = torch.from_numpy(stream.astype(np.int64))
            # position t keeps the End id as the stop target
            masks[mod][row] = True
    feats = torch.from_numpy(encoder.featurize(texts))
    return TrainingBatch(clip_ids=[s.clip_id for s in chosen], text_feat=feats,
                         prefix=prefix, targets=targets, lengths=lengths, masks=masks)
