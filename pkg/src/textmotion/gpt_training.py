"""Training loop and checkpoint format for the sequence model."""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np
import torch

from .batching import TokenizedClip, collate, make_batches, tokenize_dataset
from .ckpt import (append_csv, atomic_write_json, capture_rng_state,
                   restore_rng_state, save_torch_atomic)
from .clip import MotionDataset, NormStats
from .consistency import JOINT_DIM, MARGIN, JointSpaceExtractor, batch_consistency_loss, final_loss
from .containers import ContainerError
from .errors import ConfigError
from .gpt import GPTConfig, MultiIndexGPT, gpt_loss
from .preprocess import train_norm_stats
from .textenc import make_text_encoder
from .vq_training import expert_fingerprint
from .vqvae import VQExpert

GPT_FILES = ("config.json", "weights.pt")


@dataclass
class GPTTrainConfig:
    steps: int = 1200
    batch_size: int = 24
    lr: float = 3e-4
    betas: tuple = (0.5, 0.99)
    weight_decay: float = 1e-4
    lr_step_every: int = 800          # StepLR interval in optimizer steps
    lr_gamma: float = 0.3
    eta_hand: float = 1.0
    eta_face: float = 1.0
    use_consistency: bool = True
    consistency_warmup: int = 0       # steps before the alignment term engages
    lambdas: tuple = (1.0, 1.0, 1.0)
    margin: float = MARGIN
    d_joint: int = JOINT_DIM
    seed: int = 0
    split: str = "train"
    text_encoder: str = "hashed_bow"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        d["lambdas"] = list(self.lambdas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GPTTrainConfig":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown GPTTrainConfig keys: {sorted(extra)}")
        d = dict(d)
        for key in ("betas", "lambdas"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


class GenerationModel(torch.nn.Module):
    """Sequence model plus its co-trained joint-space extractors."""

    def __init__(self, config: GPTConfig, body_codebook: torch.Tensor | None = None,
                 d_joint: int = JOINT_DIM):
        super().__init__()
        self.gpt = MultiIndexGPT(config, body_codebook)
        self.extractors = torch.nn.ModuleDict({
            mod: JointSpaceExtractor(config.n_codes(mod) + 1, d_joint)
            for mod in ("body", "hand", "face")})

    @property
    def config(self) -> GPTConfig:
        return self.gpt.config

    def forward(self, text_feat, prefix):
        return self.gpt(text_feat, prefix)


def check_expert_compat(config: GPTConfig, experts: dict[str, VQExpert]):
    body = experts["body"]
    if body.config.code_dim != config.body_code_dim:
        raise ConfigError(
            f"body code width {body.config.code_dim} != model's {config.body_code_dim}")
    for mod in ("body", "hand", "face"):
        k = experts[mod].config.n_codes
        if k != config.n_codes(mod):
            raise ConfigError(f"{mod} codebook size {k} != model's {config.n_codes(mod)}")


def _lr_at(base_lr: float, gamma: float, every: int, step: int) -> float:
    return base_lr * gamma ** (step // max(1, every))


@dataclass
class GPTTrainResult:
    model: GenerationModel
    history: list[dict] = field(default_factory=list)
    checkpoint_dir: Path | None = None


def train_gpt(dataset: MotionDataset, experts: dict[str, VQExpert],
              config: GPTConfig, train_config: GPTTrainConfig | None = None,
              stats: NormStats | None = None,
              out_dir: Path | str | None = None,
              resume: bool = False,
              expert_dirs: dict[str, Path] | None = None,
              tokenized: list[TokenizedClip] | None = None) -> GPTTrainResult:
    """Teacher-forced training of the sequence model (plus extractors).

    The corpus is tokenized once up front.  Every run is deterministic in
    the seed; with out_dir set the checkpoint is resumable and a resumed
    run reproduces the uninterrupted loss trace exactly.
    """
    tc = train_config or GPTTrainConfig()
    check_expert_compat(config, experts)
    stats = stats or train_norm_stats(dataset)
    encoder = make_text_encoder(tc.text_encoder, config.text_width)
    if tokenized is None:
        tokenized = tokenize_dataset(experts, dataset, stats, tc.split, config.max_tokens)
    needs = tuple(m for m, active in (
        ("hand", tc.eta_hand != 0 or (tc.use_consistency and (tc.lambdas[0] or tc.lambdas[2]))),
        ("face", tc.eta_face != 0 or (tc.use_consistency and (tc.lambdas[1] or tc.lambdas[2]))),
    ) if active)
    end_ids = {m: config.end_id(m) for m in ("body", "hand", "face")}

    torch.manual_seed(tc.seed)
    model = GenerationModel(config, experts["body"].codebook.embed.detach(), tc.d_joint)
    opt = torch.optim.AdamW(model.parameters(), lr=tc.lr, betas=tc.betas,
                            weight_decay=tc.weight_decay)
    start_step = 0
    history: list[dict] = []
    out_path = Path(out_dir) if out_dir is not None else None
    if resume:
        if out_path is None or not (out_path / "state.pt").exists():
            raise ContainerError("resume requested but no checkpoint state found")
        state = torch.load(out_path / "state.pt", weights_only=False)
        model.load_state_dict(state["model"])
        opt.load_state_dict(state["optimizer"])
        restore_rng_state(state["rng"])
        start_step = state["step"]
        history = state["history"]

    n_batches = (len(tokenized) + tc.batch_size - 1) // tc.batch_size
    epoch_rows: list[str] = []
    # rebuild the partial epoch accumulator so a resumed run emits the same
    # epoch-mean rows as an uninterrupted one
    epoch_acc = [r for r in history if (r["step"] - 1) // n_batches == start_step // n_batches]
    model.train()
    for step in range(start_step, tc.steps):
        epoch, bi = divmod(step, n_batches)
        if bi == 0 or step == start_step:
            batches = make_batches(tokenized, tc.batch_size, tc.seed + epoch, needs)
        text_rng = np.random.default_rng(
            np.random.SeedSequence(entropy=tc.seed, spawn_key=(epoch, bi)))
        batch = collate(tokenized, batches[bi], encoder, end_ids, text_rng)
        for group in opt.param_groups:
            group["lr"] = _lr_at(tc.lr, tc.lr_gamma, tc.lr_step_every, step)
        logits = model(batch.text_feat, batch.prefix)
        token_total, parts = gpt_loss(logits, batch.targets, batch.lengths, batch.masks,
                                      tc.eta_hand, tc.eta_face)
        if tc.use_consistency and step >= tc.consistency_warmup:
            probs = {m: logits[m].softmax(dim=-1) for m in logits}
            cons = batch_consistency_loss(dict(model.extractors), batch.targets, probs,
                                          batch.lengths, batch.masks, tc.lambdas, tc.margin)
        else:
            cons = torch.zeros(())
        loss = final_loss(token_total, cons)
        opt.zero_grad()
        loss.backward()
        opt.step()
        row = {"step": step + 1, "total": float(loss.detach()),
               "body_ce": parts["body"], "hand_ce": parts["hand"],
               "face_ce": parts["face"], "consistency": float(cons.detach())}
        history.append(row)
        epoch_acc.append(row)
        if bi == n_batches - 1 or step == tc.steps - 1:
            keys = ("total", "body_ce", "hand_ce", "face_ce", "consistency")
            means = {k: sum(r[k] for r in epoch_acc) / len(epoch_acc) for k in keys}
            epoch_rows.append(f"{step + 1}," + ",".join(f"{means[k]:.6f}" for k in keys))
            epoch_acc = []

    model.eval()
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        save_gpt(model, out_path, tc, expert_dirs)
        save_torch_atomic({
            "model": model.state_dict(), "optimizer": opt.state_dict(),
            "rng": capture_rng_state(), "step": tc.steps, "history": history,
        }, out_path / "state.pt")
        append_csv(out_path / "loss_curve.csv",
                   "step,total,body_ce,hand_ce,face_ce,consistency", epoch_rows)
    return GPTTrainResult(model=model, history=history, checkpoint_dir=out_path)


def save_gpt(model: GenerationModel, out_dir: Path | str,
             train_config: GPTTrainConfig | None = None,
             expert_dirs: dict[str, Path] | None = None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    expert_info = {}
    if expert_dirs:
        for mod, d in expert_dirs.items():
            expert_info[mod] = {
                "path": str(Path(d).resolve()),
                "sha256": expert_fingerprint(d),
            }
    tc = train_config or GPTTrainConfig()
    payload = {
        "kind": "sequence_model",
        "gpt": model.config.to_dict(),
        "train": tc.to_dict(),
        "d_joint": model.extractors["body"].d_joint,
        "text_encoder": {"name": tc.text_encoder, "width": model.config.text_width},
        "experts": expert_info,
    }
    atomic_write_json(out / "config.json", payload)
    save_torch_atomic(model.state_dict(), out / "weights.pt")


def load_gpt(ckpt_dir: Path | str) -> tuple[GenerationModel, dict]:
    root = Path(ckpt_dir)
    cfg_path = root / "config.json"
    if not cfg_path.exists():
        raise ContainerError(f"missing model config: {cfg_path}")
    payload = json.loads(cfg_path.read_text())
    if payload.get("kind") != "sequence_model":
        raise ContainerError(f"{cfg_path} is not a sequence-model checkpoint")
    model = GenerationModel(GPTConfig.from_dict(payload["gpt"]),
                            d_joint=payload.get("d_joint", JOINT_DIM))
    model.load_state_dict(torch.load(root / "weights.pt", weights_only=True))
    model.eval()
    return model, payload
