"""Training loop and checkpoint format for the motion experts."""
from __future__ import annotations

from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch

from .ckpt import (append_csv, atomic_write_json, capture_rng_state,
                   checkpoint_fingerprint, restore_rng_state, save_torch_atomic)
from .clip import MotionDataset, NormStats
from .containers import ContainerError, atomic_write_bytes
from .errors import ConfigError, NoDataError
from .preprocess import train_norm_stats
from .vqvae import VQConfig, VQExpert, vq_loss

EXPERT_FILES = ("config.json", "weights.pt", "codebook.f32")


@dataclass
class VQTrainConfig:
    steps: int = 600
    batch_size: int = 32
    window: int = 64
    lr: float = 2e-4
    weight_decay: float = 0.0
    seed: int = 0
    split: str = "train"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "VQTrainConfig":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown VQTrainConfig keys: {sorted(extra)}")
        return cls(**d)


def _gather_tracks(dataset: MotionDataset, modality: str, split: str,
                   stats: NormStats) -> list[np.ndarray]:
    tracks = []
    for cid in dataset.splits.get(split, []):
        clip = dataset.get(cid)
        arr = clip.track(modality)
        if arr is not None:
            tracks.append(stats.normalize(arr, modality))
    if not tracks:
        raise NoDataError(f"no {modality} tracks in split {split!r}")
    return tracks


def _sample_batch(tracks: list[np.ndarray], window: int, batch_size: int,
                  gen: torch.Generator) -> torch.Tensor:
    idx = torch.randint(len(tracks), (batch_size,), generator=gen)
    out = np.empty((batch_size, window, tracks[0].shape[1]), dtype=np.float32)
    for row, i in enumerate(idx.tolist()):
        track = tracks[i]
        start = int(torch.randint(track.shape[0] - window + 1, (1,), generator=gen))
        out[row] = track[start:start + window]
    return torch.from_numpy(out)


def _ema_update(expert: VQExpert, z_flat: torch.Tensor, tokens: torch.Tensor,
                gen: torch.Generator):
    """Exponential-moving-average codebook update with dead-code reseeding."""
    cfg = expert.config
    with torch.no_grad():
        z64 = z_flat.detach().to(torch.float64)
        onehot = torch.zeros(z64.shape[0], cfg.n_codes, dtype=torch.float64)
        onehot[torch.arange(z64.shape[0]), tokens] = 1.0
        counts = onehot.sum(0)
        sums = onehot.t() @ z64
        expert.ema_count.mul_(cfg.ema_decay).add_(counts, alpha=1 - cfg.ema_decay)
        expert.ema_sum.mul_(cfg.ema_decay).add_(sums, alpha=1 - cfg.ema_decay)
        used = counts > 0
        expert.code_age.add_(1)
        expert.code_age[used] = 0
        denom = expert.ema_count.clamp(min=1e-8)[:, None]
        expert.codebook.embed.data[used] = (expert.ema_sum / denom)[used].to(torch.float32)
        dead = expert.code_age >= cfg.dead_code_steps
        n_dead = int(dead.sum())
        if n_dead:
            pick = torch.randint(z64.shape[0], (n_dead,), generator=gen)
            expert.codebook.embed.data[dead] = z_flat.detach()[pick]
            expert.code_age[dead] = 0
            expert.ema_count[dead] = 1.0
            expert.ema_sum[dead] = z64[pick]


@dataclass
class VQTrainResult:
    expert: VQExpert
    history: list[dict]
    checkpoint_dir: Path | None


def train_vqvae(dataset: MotionDataset, config: VQConfig,
                train_config: VQTrainConfig | None = None,
                stats: NormStats | None = None,
                out_dir: Path | str | None = None,
                resume: bool = False) -> VQTrainResult:
    """Fit one modality expert on the train split.

    Deterministic in the seed.  With out_dir set, writes a resumable
    checkpoint (config, weights + optimizer + RNG, raw codebook, loss
    curve CSV); resume=True continues an interrupted run to the
    configured step count with the identical loss trace.
    """
    tc = train_config or VQTrainConfig()
    stats = stats or train_norm_stats(dataset)
    tracks = _gather_tracks(dataset, config.modality, tc.split, stats)
    window = min(tc.window, min(t.shape[0] for t in tracks))
    window -= window % config.downsample
    if window < config.downsample:
        raise NoDataError(f"clips too short for downsample {config.downsample}")

    torch.manual_seed(tc.seed)
    expert = VQExpert(config)
    # store the effective scale (std + eps) so expert-side denormalization
    # matches NormStats.denormalize exactly
    expert.set_norm_stats(stats.mean[config.modality],
                          stats.std[config.modality] + stats.eps)
    params = [p for n, p in expert.named_parameters()
              if not (config.ema or config.freeze_codebook) or "codebook" not in n]
    opt = torch.optim.AdamW(params, lr=tc.lr, weight_decay=tc.weight_decay)
    gen = torch.Generator().manual_seed(tc.seed + 1)
    start_step = 0
    history: list[dict] = []

    out_path = Path(out_dir) if out_dir is not None else None
    if resume:
        if out_path is None or not (out_path / "state.pt").exists():
            raise ContainerError("resume requested but no checkpoint state found")
        state = torch.load(out_path / "state.pt", weights_only=False)
        expert.load_state_dict(state["model"])
        opt.load_state_dict(state["optimizer"])
        gen.set_state(state["sampler_rng"])
        restore_rng_state(state["rng"])
        start_step = state["step"]
        history = state["history"]

    steps_per_epoch = max(1, len(tracks) // tc.batch_size)
    epoch_rows: list[str] = []
    sums = dict.fromkeys(("total", "reconstruction", "velocity", "alignment", "commitment"), 0.0)
    used_codes: set[int] = set()
    n_in_epoch = 0

    for step in range(start_step, tc.steps):
        batch = _sample_batch(tracks, window, tc.batch_size, gen)
        m_hat, z, z_q, tokens = expert(batch)
        total, parts = vq_loss(batch, m_hat, z, z_q, config.alpha, config.beta)
        opt.zero_grad()
        total.backward()
        opt.step()
        if config.ema and not config.freeze_codebook:
            _ema_update(expert, z.reshape(-1, config.code_dim), tokens.reshape(-1), gen)
        sums["total"] += float(total.detach())
        for k, v in parts.items():
            sums[k] += v
        used_codes.update(tokens.reshape(-1).tolist())
        n_in_epoch += 1
        if n_in_epoch == steps_per_epoch or step == tc.steps - 1:
            row = {k: v / n_in_epoch for k, v in sums.items()}
            row.update(step=step + 1, usage=len(used_codes) / config.n_codes)
            history.append(row)
            epoch_rows.append(
                f"{row['step']},{row['total']:.6f},{row['reconstruction']:.6f},"
                f"{row['velocity']:.6f},{row['alignment']:.6f},"
                f"{row['commitment']:.6f},{row['usage']:.4f}")
            sums = dict.fromkeys(sums, 0.0)
            used_codes.clear()
            n_in_epoch = 0

    expert.eval()
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        save_expert(expert, out_path, tc, stats)
        save_torch_atomic({
            "model": expert.state_dict(), "optimizer": opt.state_dict(),
            "sampler_rng": gen.get_state(), "rng": capture_rng_state(),
            "step": tc.steps, "history": history,
        }, out_path / "state.pt")
        append_csv(out_path / "loss_curve.csv",
                   "step,total,reconstruction,velocity,alignment,commitment,usage",
                   epoch_rows)
    return VQTrainResult(expert=expert, history=history, checkpoint_dir=out_path)


def save_expert(expert: VQExpert, out_dir: Path | str, train_config: VQTrainConfig | None = None,
                stats: NormStats | None = None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "kind": "vq_expert",
        "modality": expert.modality,
        "vq": expert.config.to_dict(),
        "train": train_config.to_dict() if train_config else None,
        "norm_mean": expert.norm_mean.numpy().tolist(),
        "norm_std": expert.norm_std.numpy().tolist(),
    }
    atomic_write_json(out / "config.json", payload)
    save_torch_atomic(expert.state_dict(), out / "weights.pt")
    book = expert.codebook.embed.detach().numpy().astype("<f4")
    atomic_write_bytes(out / "codebook.f32", book.tobytes())


def load_expert(ckpt_dir: Path | str) -> VQExpert:
    root = Path(ckpt_dir)
    cfg_path = root / "config.json"
    if not cfg_path.exists():
        raise ContainerError(f"missing expert config: {cfg_path}")
    import json

    payload = json.loads(cfg_path.read_text())
    if payload.get("kind") != "vq_expert":
        raise ContainerError(f"{cfg_path} is not an expert checkpoint")
    expert = VQExpert(VQConfig.from_dict(payload["vq"]))
    expert.load_state_dict(torch.load(root / "weights.pt", weights_only=True))
    expert.eval()
    return expert


def expert_fingerprint(ckpt_dir: Path | str) -> str:
    return checkpoint_fingerprint(ckpt_dir, EXPERT_FILES)
