"""Autoregressive decoding of the three token streams from text.

The body stream drives the loop: each step feeds the body prefix back
and reads one new token per branch, so all streams always have equal
length.  Only the body branch may emit End; a premature hand/face End is
replaced by that branch's best non-End token and the event is logged in
the audit trail.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import torch

from .clip import MotionClip
from .errors import ConfigError, EmptyMotionError
from .gpt_training import GenerationModel
from .textenc import TextEncoder
from .vqvae import VQExpert, tokens_to_motion

MODS = ("body", "hand", "face")


@dataclass
class SamplingConfig:
    mode: str = "greedy"          # "greedy" | "sample"
    temperature: float = 1.0
    top_k: int | None = 10        # None = full distribution (sample mode)
    max_tokens: int | None = None  # None = model limit
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("greedy", "sample"):
            raise ConfigError(f"unknown sampling mode {self.mode!r}")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")


@dataclass
class AuditEvent:
    """One premature End replacement on a non-body branch."""

    step: int          # 1-based decoding step
    branch: str
    end_prob: float    # probability the branch put on End
    token: int         # replacement code id (the best non-End token)

    def to_dict(self) -> dict:
        return {"step": self.step, "branch": self.branch,
                "end_prob": self.end_prob, "token": self.token}


@dataclass
class TokenSample:
    """Raw decoder output; streams include the End id when stopped=True."""

    tokens: dict[str, np.ndarray]
    audit: list[AuditEvent] = field(default_factory=list)
    stopped: bool = False
    n_steps: int = 0

    def code_tokens(self, modality: str) -> np.ndarray:
        toks = self.tokens[modality]
        return toks[:-1] if self.stopped else toks


def _pick(logits: torch.Tensor, cfg: SamplingConfig, gen: torch.Generator) -> int:
    if cfg.mode == "greedy":
        return int(torch.argmax(logits))
    scaled = logits / cfg.temperature
    if cfg.top_k is not None and cfg.top_k < logits.shape[-1]:
        vals, idx = torch.topk(scaled, cfg.top_k)
        probs = torch.softmax(vals, dim=-1)
        j = int(torch.multinomial(probs, 1, generator=gen))
        return int(idx[j])
    probs = torch.softmax(scaled, dim=-1)
    return int(torch.multinomial(probs, 1, generator=gen))


def sample_tokens(model: GenerationModel, text_feat: np.ndarray | torch.Tensor,
                  cfg: SamplingConfig | None = None) -> list[TokenSample]:
    """Decode token streams for each text feature row.

    Returns one TokenSample per row.  Decoding is deterministic in
    cfg.seed; rows are processed jointly but their streams never interact.
    """
    cfg = cfg or SamplingConfig()
    feats = torch.as_tensor(np.asarray(text_feat), dtype=torch.float32)
    if feats.ndim == 1:
        feats = feats[None]
    n = feats.shape[0]
    max_tokens = cfg.max_tokens or model.config.max_tokens
    max_tokens = min(max_tokens, model.config.max_tokens)
    gen = torch.Generator().manual_seed(cfg.seed)
    end = {m: model.config.end_id(m) for m in MODS}
    streams: list[dict[str, list[int]]] = [{m: [] for m in MODS} for _ in range(n)]
    audits: list[list[AuditEvent]] = [[] for _ in range(n)]
    done = [False] * n
    prefix = torch.full((n, 0), 0, dtype=torch.long)

    with torch.no_grad():
        for step in range(1, max_tokens + 1):
            logits = model(feats, prefix)
            last = {m: logits[m][:, -1, :] for m in MODS}
            next_body = torch.full((n,), end["body"], dtype=torch.long)
            for i in range(n):
                if done[i]:
                    continue
                body_choice = _pick(last["body"][i], cfg, gen)
                if body_choice == end["body"]:
                    for m in MODS:
                        streams[i][m].append(end[m])
                    done[i] = True
                    continue
                streams[i]["body"].append(body_choice)
                next_body[i] = body_choice
                for m in ("hand", "face"):
                    choice = _pick(last[m][i], cfg, gen)
                    if choice == end[m]:
                        probs = torch.softmax(last[m][i], dim=-1)
                        repl = int(torch.argmax(probs[: end[m]]))
                        audits[i].append(AuditEvent(
                            step=step, branch=m, end_prob=float(probs[end[m]]),
                            token=repl))
                        choice = repl
                    streams[i][m].append(choice)
            if all(done):
                break
            prefix = torch.cat([prefix, next_body[:, None]], dim=1)

    out = []
    for i in range(n):
        stopped = done[i]
        toks = {m: np.asarray(streams[i][m], dtype=np.int64) for m in MODS}
        n_codes = len(toks["body"]) - (1 if stopped else 0)
        out.append(TokenSample(tokens=toks, audit=audits[i], stopped=stopped,
                               n_steps=n_codes))
    return out


@dataclass
class GeneratedMotion:
    """Decoded motion in physical units; all tracks share the frame count."""

    text: str
    body: np.ndarray
    hand: np.ndarray
    face: np.ndarray
    fps: float
    tokens: dict[str, np.ndarray]      # code ids, End stripped
    audit: list[AuditEvent] = field(default_factory=list)
    truncated: bool = False

    @property
    def n_frames(self) -> int:
        return int(self.body.shape[0])

    def to_clip(self, clip_id: str) -> MotionClip:
        return MotionClip(id=clip_id, fps=self.fps, body=self.body,
                          hand=self.hand, face=self.face, texts=[self.text])


def decode_sample(sample: TokenSample, experts: dict[str, VQExpert], text: str,
                  fps: float = 30.0) -> GeneratedMotion:
    """Turn one token sample into frames; empty body streams are rejected."""
    codes = {m: sample.code_tokens(m) for m in MODS}
    if codes["body"].shape[0] == 0:
        raise EmptyMotionError(
            "generated motion too short: End at the first step, nothing to decode")
    tracks = {m: tokens_to_motion(experts[m], codes[m]) for m in MODS}
    frames = {m: t.shape[0] for m, t in tracks.items()}
    assert len(set(frames.values())) == 1, f"unequal decoded lengths {frames}"
    return GeneratedMotion(text=text, body=tracks["body"], hand=tracks["hand"],
                           face=tracks["face"], fps=fps, tokens=codes,
                           audit=sample.audit, truncated=not sample.stopped)


def generate(model: GenerationModel, experts: dict[str, VQExpert],
             encoder: TextEncoder, text: str, cfg: SamplingConfig | None = None,
             fps: float = 30.0) -> GeneratedMotion:
    feats = encoder.featurize([text])
    sample = sample_tokens(model, feats, cfg)[0]
    return decode_sample(sample, experts, text, fps)


def generate_many(model: GenerationModel, experts: dict[str, VQExpert],
                  encoder: TextEncoder, texts: list[str],
                  cfg: SamplingConfig | None = None, fps: float = 30.0,
                  batch_size: int = 32,
                  skip_empty: bool = False) -> list[GeneratedMotion]:
    """Batched generation; sampling draws depend on batch composition but
    not on anything outside the given seed.

    skip_empty=True drops too-short generations (End at the first step)
    with a warning instead of raising, for bulk evaluation runs.
    """
    feats = encoder.featurize(texts)
    out = []
    for i in range(0, len(texts), batch_size):
        chunk = feats[i:i + batch_size]
        for j, sample in enumerate(sample_tokens(model, chunk, cfg)):
            try:
                out.append(decode_sample(sample, experts, texts[i + j], fps))
            except EmptyMotionError as e:
                if not skip_empty:
                    raise
                warnings.warn(f"dropping generation for text {texts[i + j]!r}: {e}")
    return out
