"""Joint-space alignment between the three token streams.

Each modality gets a small recurrent extractor mapping its token stream
(one-hot of the teacher-forced target concatenated with the branch's
predicted distribution) into a shared feature space.  A margin
contrastive loss then pulls the per-position features of one sample's
modalities together and pushes other samples' features away.  The
distribution half keeps the whole path differentiable into the branch
logits, which is how unannotated streams still receive training signal.
"""
from __future__ import annotations

import torch
from torch import nn
import torch.nn.functional as F

from .errors import (AlignmentError, DegenerateBatchError,
                     InvalidDistributionError, ShapeMismatchError)

JOINT_DIM = 64
MARGIN = 10.0
PAIRS = (("body", "hand"), ("body", "face"), ("hand", "face"))


class JointSpaceExtractor(nn.Module):
    """GRU over [one-hot(token) | probability row] -> joint-space features."""

    def __init__(self, n_tokens: int, d_joint: int = JOINT_DIM):
        super().__init__()
        self.n_tokens = n_tokens
        self.d_joint = d_joint
        self.gru = nn.GRU(2 * n_tokens, d_joint, batch_first=True)

    def forward(self, tokens: torch.Tensor, probs: torch.Tensor) -> torch.Tensor:
        onehot = F.one_hot(tokens, num_classes=self.n_tokens).to(probs.dtype)
        out, _ = self.gru(torch.cat([onehot, probs], dim=-1))
        return out


def extract_features(extractor: JointSpaceExtractor, tokens: torch.Tensor,
                     probs: torch.Tensor) -> torch.Tensor:
    """tokens (B, L) long, probs (B, L, n_tokens) -> features (B, L, d_joint).

    Probability rows must sum to 1 within 1e-5; ground-truth streams pass
    the one-hot of the token as the probability row.
    """
    if tokens.ndim != 2 or probs.ndim != 3 or probs.shape[:2] != tokens.shape:
        raise ShapeMismatchError(
            f"tokens {tuple(tokens.shape)} vs probs {tuple(probs.shape)}")
    if probs.shape[-1] != extractor.n_tokens:
        raise ShapeMismatchError(
            f"distribution width {probs.shape[-1]} != {extractor.n_tokens}")
    sums = probs.detach().sum(dim=-1)
    worst = float((sums - 1.0).abs().max()) if sums.numel() else 0.0
    if worst > 1e-5:
        raise InvalidDistributionError(f"probability rows sum off by {worst:.2e}")
    return extractor(tokens, probs)


def one_hot_probs(tokens: torch.Tensor, n_tokens: int) -> torch.Tensor:
    """Degenerate distributions for ground-truth streams."""
    return F.one_hot(tokens, num_classes=n_tokens).float()


def contrastive_loss(e_a: torch.Tensor, e_b: torch.Tensor,
                     negatives: torch.Tensor, margin: float = MARGIN) -> torch.Tensor:
    """Per-position squared pull with a margin push, averaged over positions.

    e_a, e_b: (L, d) aligned feature tracks.  negatives: (L, N, d) with
    N >= 1 contrast features per position (an empty set is degenerate).
    """
    if e_a.shape != e_b.shape:
        raise AlignmentError(f"feature tracks differ: {tuple(e_a.shape)} vs {tuple(e_b.shape)}")
    if negatives.ndim != 3 or negatives.shape[0] != e_a.shape[0] \
            or negatives.shape[2] != e_a.shape[1]:
        raise ShapeMismatchError(f"negatives {tuple(negatives.shape)} misaligned")
    if negatives.shape[1] == 0:
        raise DegenerateBatchError("contrastive loss needs at least one negative")
    pull = ((e_a - e_b) ** 2).sum(dim=-1)
    dist = torch.linalg.vector_norm(e_a[:, None, :] - negatives, dim=-1)
    push = F.relu(margin - dist).pow(2).mean(dim=1)
    return (pull + push).mean()


def consistency_loss(e_body: torch.Tensor | None, e_hand: torch.Tensor | None,
                     e_face: torch.Tensor | None,
                     negatives: dict[str, torch.Tensor],
                     lambdas: tuple[float, float, float] = (1.0, 1.0, 1.0),
                     margin: float = MARGIN) -> torch.Tensor:
    """Weighted sum of pairwise contrastive terms for one sample.

    A pair contributes only when both feature tracks exist and its weight
    is nonzero; the negative pool is taken from the pair's second stream.
    Present tracks must agree in length.
    """
    feats = {"body": e_body, "hand": e_hand, "face": e_face}
    present = {m: f for m, f in feats.items() if f is not None}
    lens = {m: f.shape[0] for m, f in present.items()}
    if len(set(lens.values())) > 1:
        raise AlignmentError(f"feature track lengths differ: {lens}")
    total = torch.zeros(())
    for weight, (a, b) in zip(lambdas, PAIRS):
        if weight == 0.0 or feats[a] is None or feats[b] is None:
            continue
        total = total + weight * contrastive_loss(feats[a], feats[b], negatives[b], margin)
    return total


def _negatives_for(e_all: torch.Tensor, lengths: torch.Tensor, rows: torch.Tensor,
                   length: int) -> torch.Tensor:
    """Stack other samples' features, clamping positions to their lengths.

    e_all: (B, L_max, d); rows: candidate sample indices (excluding the
    anchor).  Returns (length, n_rows, d).
    """
    pos = torch.arange(length)
    out = []
    for r in rows.tolist():
        idx = pos.clamp(max=int(lengths[r]) - 1)
        out.append(e_all[r, idx])
    return torch.stack(out, dim=1) if out else e_all.new_zeros(length, 0, e_all.shape[-1])


def batch_consistency_loss(extractors: dict[str, JointSpaceExtractor],
                           tokens: dict[str, torch.Tensor],
                           probs: dict[str, torch.Tensor],
                           lengths: torch.Tensor,
                           masks: dict[str, torch.Tensor],
                           lambdas: tuple[float, float, float] = (1.0, 1.0, 1.0),
                           margin: float = MARGIN) -> torch.Tensor:
    """Average per-sample consistency over a teacher-forced batch.

    tokens[mod]: (B, L) target ids, probs[mod]: (B, L, K+1) branch
    distributions over the supervised region (position L-1 is the End
    target).  Samples lacking a modality are excluded from its pairs and
    from negative pools, so corrupting their streams cannot move the
    value.  Samples whose pairs are all inactive contribute nothing.
    """
    feats: dict[str, torch.Tensor] = {}
    for mod, ex in extractors.items():
        feats[mod] = extract_features(ex, tokens[mod], probs[mod])
    n = lengths.shape[0]
    total = torch.zeros(())
    n_contributing = 0
    for i in range(n):
        li = int(lengths[i]) + 1  # supervised positions: tokens plus End
        e_i = {m: feats[m][i, :li] if masks[m][i] else None for m in feats}
        negs = {}
        for m in feats:
            rows = torch.tensor([j for j in range(n) if j != i and bool(masks[m][j])],
                                dtype=torch.long)
            negs[m] = _negatives_for(feats[m], lengths + 1, rows, li)
        active = any(
            w != 0.0 and e_i[a] is not None and e_i[b] is not None and negs[b].shape[1] > 0
            for w, (a, b) in zip(lambdas, PAIRS))
        if not active:
            continue
        # a pair whose negative pool is empty is skipped rather than
        # degenerate: the positive-only term would be unopposed
        eff = tuple(
            w if (e_i[a] is not None and e_i[b] is not None and negs[b].shape[1] > 0) else 0.0
            for w, (a, b) in zip(lambdas, PAIRS))
        total = total + consistency_loss(
            e_i["body"], e_i["hand"], e_i["face"], negs, eff, margin)
        n_contributing += 1
    if n_contributing == 0:
        return torch.zeros(())
    return total / n_contributing


def final_loss(gpt_total: torch.Tensor, consistency_total: torch.Tensor) -> torch.Tensor:
    """Training objective: token prediction plus position-averaged alignment."""
    return gpt_total + consistency_total
