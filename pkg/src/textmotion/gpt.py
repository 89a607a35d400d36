"""Autoregressive sequence model over motion codes with three output branches.

A shared causal transformer reads [text, body code 1 .. body code T] and
each branch (body / hand / face) continues with its own causal stack and
a linear head.  The logits at position i parameterize token i + 1 of that
branch, so the first motion token is predicted from the text alone and
hand/face streams are driven by the body prefix, never by their own
history.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import torch
from torch import nn
import torch.nn.functional as F

from .errors import ConfigError, ContractViolationError, LengthError, ShapeMismatchError

MAX_TOKENS = 128


@dataclass
class GPTConfig:
    d_model: int = 64
    n_heads: int = 4
    n_base_layers: int = 2
    n_branch_layers: int = 2
    text_width: int = 512
    max_tokens: int = MAX_TOKENS
    n_body_codes: int = 64
    n_hand_codes: int = 64
    n_face_codes: int = 64
    body_code_dim: int = 32

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model {self.d_model} not divisible by heads {self.n_heads}")

    def n_codes(self, modality: str) -> int:
        return {"body": self.n_body_codes, "hand": self.n_hand_codes,
                "face": self.n_face_codes}[modality]

    def end_id(self, modality: str) -> int:
        return self.n_codes(modality)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GPTConfig":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown GPTConfig keys: {sorted(extra)}")
        return cls(**d)


class CausalSelfAttention(nn.Module):
    """Scaled dot-product attention with an additive -inf upper mask.

    Masked score positions are exactly -inf before the softmax, so future
    positions carry exactly zero weight (not merely a small one).
    """

    def __init__(self, d_model: int, n_heads: int, max_len: int):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.proj = nn.Linear(d_model, d_model)
        mask = torch.tril(torch.ones(max_len, max_len, dtype=torch.bool))
        self.register_buffer("causal_mask", mask, persistent=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, s, d = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        q = q.view(b, s, self.n_heads, self.d_head).transpose(1, 2)
        k = k.view(b, s, self.n_heads, self.d_head).transpose(1, 2)
        v = v.view(b, s, self.n_heads, self.d_head).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)
        scores = scores.masked_fill(~self.causal_mask[:s, :s], float("-inf"))
        out = scores.softmax(dim=-1) @ v
        return self.proj(out.transpose(1, 2).reshape(b, s, d))


class TransformerBlock(nn.Module):
    def __init__(self, d_model: int, n_heads: int, max_len: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(d_model)
        self.attn = CausalSelfAttention(d_model, n_heads, max_len)
        self.ln2 = nn.LayerNorm(d_model)
        self.mlp = nn.Sequential(
            nn.Linear(d_model, 4 * d_model), nn.ReLU(), nn.Linear(4 * d_model, d_model))

    def forward(self, x):
        x = x + self.attn(self.ln1(x))
        return x + self.mlp(self.ln2(x))


class MultiIndexGPT(nn.Module):
    """Shared base + per-modality branch stacks and heads.

    Body code inputs are embedded by a frozen copy of the body expert's
    codebook followed by a learned projection; the End/padding id has its
    own learned vector.
    """

    def __init__(self, config: GPTConfig, body_codebook: torch.Tensor | None = None):
        super().__init__()
        self.config = config
        c = config
        book = torch.zeros(c.n_body_codes, c.body_code_dim) if body_codebook is None \
            else body_codebook.detach().clone().float()
        if book.shape != (c.n_body_codes, c.body_code_dim):
            raise ConfigError(
                f"body codebook {tuple(book.shape)} != ({c.n_body_codes}, {c.body_code_dim})")
        self.register_buffer("body_codebook", book)
        self.code_proj = nn.Linear(c.body_code_dim, c.d_model)
        self.end_embed = nn.Parameter(torch.zeros(c.d_model))
        self.text_proj = nn.Linear(c.text_width, c.d_model)
        max_len = c.max_tokens + 1
        self.pos_embed = nn.Parameter(torch.zeros(max_len, c.d_model))
        nn.init.normal_(self.pos_embed, std=0.02)
        nn.init.normal_(self.end_embed, std=0.02)
        self.base = nn.ModuleList(
            TransformerBlock(c.d_model, c.n_heads, max_len) for _ in range(c.n_base_layers))
        self.branches = nn.ModuleDict()
        self.heads = nn.ModuleDict()
        self.branch_norms = nn.ModuleDict()
        for mod in ("body", "hand", "face"):
            self.branches[mod] = nn.ModuleList(
                TransformerBlock(c.d_model, c.n_heads, max_len)
                for _ in range(c.n_branch_layers))
            self.branch_norms[mod] = nn.LayerNorm(c.d_model)
            self.heads[mod] = nn.Linear(c.d_model, c.n_codes(mod) + 1)

    def branch_parameters(self, modality: str):
        yield from self.branches[modality].parameters()
        yield from self.branch_norms[modality].parameters()
        yield from self.heads[modality].parameters()

    def embed_body_tokens(self, tokens: torch.Tensor) -> torch.Tensor:
        """(B, S) ids in [0, K_b] -> (B, S, d_model); id K_b is End/padding."""
        k = self.config.n_body_codes
        if tokens.numel() and (tokens.min() < 0 or tokens.max() > k):
            raise ShapeMismatchError(f"body token id outside [0, {k}]")
        safe = tokens.clamp(max=k - 1)
        emb = self.code_proj(self.body_codebook[safe])
        is_end = (tokens == k)[..., None]
        return torch.where(is_end, self.end_embed.expand_as(emb), emb)

    def forward(self, text_feat: torch.Tensor, body_prefix: torch.Tensor) -> dict[str, torch.Tensor]:
        """text_feat (B, W), body_prefix (B, S) -> per-branch logits (B, S+1, K_p+1).

        Row i of the output scores token i + 1; row 0 is conditioned on the
        text only.
        """
        if text_feat.ndim != 2 or text_feat.shape[1] != self.config.text_width:
            raise ShapeMismatchError(
                f"text features must be (B, {self.config.text_width}), got {tuple(text_feat.shape)}")
        if body_prefix.ndim != 2 or body_prefix.shape[0] != text_feat.shape[0]:
            raise ShapeMismatchError("prefix batch size must match text features")
        s = body_prefix.shape[1]
        if s > self.config.max_tokens:
            raise LengthError(f"prefix length {s} exceeds max {self.config.max_tokens}")
        tok = self.embed_body_tokens(body_prefix)
        x = torch.cat([self.text_proj(text_feat)[:, None, :], tok], dim=1)
        x = x + self.pos_embed[: s + 1]
        for block in self.base:
            x = block(x)
        out = {}
        for mod in ("body", "hand", "face"):
            h = x
            for block in self.branches[mod]:
                h = block(h)
            out[mod] = self.heads[mod](self.branch_norms[mod](h))
        return out


def gpt_loss(logits: dict[str, torch.Tensor], targets: dict[str, torch.Tensor],
             lengths: torch.Tensor, masks: dict[str, torch.Tensor],
             eta_hand: float = 1.0, eta_face: float = 1.0) -> tuple[torch.Tensor, dict]:
    """Masked next-token cross entropy, weighted across branches.

    For a sample with T tokens, positions 0..T (T motion targets plus the
    End symbol) are supervised; later rows are padding.  Each branch
    averages over the supervised positions of the samples annotated with
    that modality only, selected by boolean indexing so values at masked
    positions cannot perturb the result.  A batch with no annotated
    sample for some branch violates the sampler contract.
    """
    l_plus_1 = next(iter(logits.values())).shape[1]
    pos = torch.arange(l_plus_1, device=lengths.device)
    supervised = pos[None, :] <= lengths[:, None]
    weights = {"body": 1.0, "hand": eta_hand, "face": eta_face}
    total = None
    parts = {}
    for mod in ("body", "hand", "face"):
        sel = supervised & masks[mod][:, None]
        if not bool(sel.any()):
            raise ContractViolationError(f"batch has no sample annotated with {mod}")
        ce = F.cross_entropy(logits[mod][sel], targets[mod][sel])
        parts[mod] = float(ce.detach())
        term = weights[mod] * ce
        total = term if total is None else total + term
    return total, parts
