"""Per-modality vector-quantized motion autoencoders.

One expert per channel family (body / hand / face): a strided 1-D conv
encoder compresses normalized frames 4:1 in time, a codebook snaps each
latent column to its nearest entry, and a mirrored decoder reconstructs
frames.  Code indices are the discrete interface consumed by the
sequence model.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from .errors import ConfigError, InvalidTokenError, ShapeMismatchError
from .pose import MODALITY_DIMS

# velocity-matching weight per modality; positional channels benefit,
# rotation-only streams do not
DEFAULT_ALPHA = {"body": 0.5, "hand": 0.0, "face": 0.0}


@dataclass
class VQConfig:
    modality: str = "body"
    n_codes: int = 64
    code_dim: int = 32
    hidden: int = 128
    n_down: int = 2            # downsample rate = 2 ** n_down
    n_res: int = 2             # residual blocks per strided stage
    alpha: float | None = None  # None -> modality default
    beta: float = 0.25
    ema: bool = False
    ema_decay: float = 0.99
    dead_code_steps: int = 40  # EMA mode: reset codes unused this many steps
    freeze_codebook: bool = False

    def __post_init__(self):
        if self.modality not in MODALITY_DIMS:
            raise ConfigError(f"unknown modality {self.modality!r}")
        if self.alpha is None:
            self.alpha = DEFAULT_ALPHA[self.modality]

    @property
    def in_dim(self) -> int:
        return MODALITY_DIMS[self.modality]

    @property
    def downsample(self) -> int:
        return 2 ** self.n_down

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "VQConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown VQConfig keys: {sorted(extra)}")
        return cls(**d)


class ResBlock1d(nn.Module):
    def __init__(self, ch: int):
        super().__init__()
        self.conv1 = nn.Conv1d(ch, ch, 3, padding=1)
        self.conv2 = nn.Conv1d(ch, ch, 1)

    def forward(self, x):
        h = self.conv2(F.relu(self.conv1(F.relu(x))))
        return x + h


class Encoder1d(nn.Module):
    """(B, d_in, T) -> (B, code_dim, T / 2**n_down); T must be divisible."""

    def __init__(self, d_in: int, hidden: int, code_dim: int, n_down: int, n_res: int):
        super().__init__()
        layers: list[nn.Module] = [nn.Conv1d(d_in, hidden, 3, padding=1), nn.ReLU()]
        for _ in range(n_down):
            layers.append(nn.Conv1d(hidden, hidden, 4, stride=2, padding=1))
            layers.extend(ResBlock1d(hidden) for _ in range(n_res))
        layers.append(nn.Conv1d(hidden, code_dim, 3, padding=1))
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


class Decoder1d(nn.Module):
    """(B, code_dim, T') -> (B, d_out, T' * 2**n_down)."""

    def __init__(self, d_out: int, hidden: int, code_dim: int, n_down: int, n_res: int):
        super().__init__()
        layers: list[nn.Module] = [nn.Conv1d(code_dim, hidden, 3, padding=1), nn.ReLU()]
        for _ in range(n_down):
            layers.extend(ResBlock1d(hidden) for _ in range(n_res))
            layers.append(nn.ConvTranspose1d(hidden, hidden, 4, stride=2, padding=1))
        layers.append(nn.Conv1d(hidden, d_out, 3, padding=1))
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


class Codebook(nn.Module):
    """K learnable code vectors with exact nearest-neighbor assignment."""

    def __init__(self, n_codes: int, code_dim: int):
        super().__init__()
        self.n_codes = n_codes
        self.code_dim = code_dim
        self.embed = nn.Parameter(torch.empty(n_codes, code_dim))
        nn.init.uniform_(self.embed, -1.0 / n_codes, 1.0 / n_codes)

    @torch.no_grad()
    def assign(self, z: torch.Tensor) -> torch.Tensor:
        """Nearest code id per row of z (N, code_dim).

        Distances are evaluated in float64 with the direct squared
        difference (no expansion) so equal-distance ties resolve exactly;
        argmin keeps the lowest index on ties.
        """
        if z.ndim != 2 or z.shape[1] != self.code_dim:
            raise ShapeMismatchError(f"expected (N, {self.code_dim}), got {tuple(z.shape)}")
        z64 = z.detach().to(torch.float64)
        book = self.embed.detach().to(torch.float64)
        out = torch.empty(z64.shape[0], dtype=torch.long)
        for start in range(0, z64.shape[0], 1024):
            chunk = z64[start:start + 1024]
            d2 = ((chunk[:, None, :] - book[None, :, :]) ** 2).sum(-1)
            out[start:start + 1024] = torch.argmin(d2, dim=1)
        return out

    def lookup(self, tokens: torch.Tensor) -> torch.Tensor:
        if tokens.numel() and (tokens.min() < 0 or tokens.max() >= self.n_codes):
            bad = tokens[(tokens < 0) | (tokens >= self.n_codes)][0].item()
            raise InvalidTokenError(f"token id {bad} outside [0, {self.n_codes})")
        return self.embed[tokens]

    def quantize(self, z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Rows of z -> (nearest code rows with grad to the codebook, ids)."""
        tokens = self.assign(z)
        return self.embed[tokens], tokens


def pad_to_multiple(m: torch.Tensor, multiple: int) -> tuple[torch.Tensor, int]:
    """Right-pad (T, d) along time by repeating the final frame.

    Returns the padded array and the original length.
    """
    t = m.shape[0]
    rem = (-t) % multiple
    if rem == 0:
        return m, t
    pad = m[-1:].expand(rem, *m.shape[1:])
    return torch.cat([m, pad], dim=0), t


def time_diff(m: torch.Tensor) -> torch.Tensor:
    """Forward difference along dim -1 of (B, d, T); length T - 1."""
    return m[..., 1:] - m[..., :-1]


class VQExpert(nn.Module):
    """Encoder + codebook + decoder for one modality, in normalized units."""

    def __init__(self, config: VQConfig):
        super().__init__()
        self.config = config
        d = config.in_dim
        self.encoder = Encoder1d(d, config.hidden, config.code_dim, config.n_down, config.n_res)
        self.decoder = Decoder1d(d, config.hidden, config.code_dim, config.n_down, config.n_res)
        self.codebook = Codebook(config.n_codes, config.code_dim)
        # per-channel stats used by tokens_to_motion to restore physical units
        self.register_buffer("norm_mean", torch.zeros(d))
        self.register_buffer("norm_std", torch.ones(d))
        if config.ema:
            self.register_buffer("ema_count", torch.zeros(config.n_codes, dtype=torch.float64))
            self.register_buffer("ema_sum", torch.zeros(config.n_codes, config.code_dim, dtype=torch.float64))
            self.register_buffer("code_age", torch.zeros(config.n_codes, dtype=torch.long))

    @property
    def modality(self) -> str:
        return self.config.modality

    def set_norm_stats(self, mean: np.ndarray, std: np.ndarray):
        self.norm_mean.copy_(torch.as_tensor(mean, dtype=torch.float32))
        self.norm_std.copy_(torch.as_tensor(std, dtype=torch.float32))

    def forward(self, m: torch.Tensor):
        """m: (B, T, d) normalized, T divisible by the downsample rate.

        Returns (m_hat, z, z_q, tokens) with z/z_q shaped (B, T', code_dim);
        the decoder input carries straight-through gradients to the encoder.
        """
        if m.shape[-1] != self.config.in_dim:
            raise ShapeMismatchError(
                f"{self.modality} expects {self.config.in_dim} channels, got {m.shape[-1]}")
        if m.shape[1] % self.config.downsample != 0:
            raise ShapeMismatchError(
                f"frame count {m.shape[1]} not divisible by {self.config.downsample}")
        z = self.encoder(m.transpose(1, 2)).transpose(1, 2)   # (B, T', d_c)
        flat = z.reshape(-1, self.config.code_dim)
        z_q_flat, tokens = self.codebook.quantize(flat)
        z_q = z_q_flat.view(z.shape)
        tokens = tokens.view(z.shape[0], z.shape[1])
        dec_in = z + (z_q - z).detach()                       # straight-through
        m_hat = self.decoder(dec_in.transpose(1, 2)).transpose(1, 2)
        return m_hat, z, z_q, tokens

    @torch.no_grad()
    def encode(self, m: np.ndarray) -> tuple[np.ndarray, int]:
        """Frames (T, d) -> (code ids (ceil(T/l),), true frame count T)."""
        x = torch.as_tensor(np.ascontiguousarray(m), dtype=torch.float32)
        if x.ndim != 2:
            raise ShapeMismatchError(f"expected (T, d), got {tuple(x.shape)}")
        x, true_t = pad_to_multiple(x, self.config.downsample)
        _, _, _, tokens = self.forward(x[None])
        return tokens[0].numpy().astype(np.int64), true_t

    @torch.no_grad()
    def decode_tokens(self, tokens: np.ndarray) -> np.ndarray:
        """Code ids (T',) -> normalized frames (T' * l, d)."""
        ids = torch.as_tensor(tokens, dtype=torch.long)
        if ids.ndim != 1:
            raise ShapeMismatchError(f"expected (T',), got {tuple(ids.shape)}")
        z_q = self.codebook.lookup(ids)[None]
        m_hat = self.decoder(z_q.transpose(1, 2)).transpose(1, 2)
        return m_hat[0].numpy()


def tokens_to_motion(expert: VQExpert, tokens: np.ndarray) -> np.ndarray:
    """Decode code ids to frames in physical units (float32).

    Ids at or above the codebook size raise InvalidTokenError; the End
    symbol must be stripped before decoding.
    """
    norm = expert.decode_tokens(np.asarray(tokens))
    mean = expert.norm_mean.numpy()
    std = expert.norm_std.numpy()
    return (norm * std + mean).astype(np.float32)


def vq_loss(m: torch.Tensor, m_hat: torch.Tensor, z: torch.Tensor, z_q: torch.Tensor,
            alpha: float, beta: float,
            frame_mask: torch.Tensor | None = None) -> tuple[torch.Tensor, dict]:
    """Reconstruction + velocity + codebook alignment + commitment.

    All terms are means over unmasked elements.  frame_mask (B, T) marks
    real frames; padded tails are excluded from the frame terms (velocity
    steps count when both endpoints are real).  Latent terms are always
    unmasked: padding repeats the final frame, so its codes are genuine.
    Returns (total, components) with detached per-term floats.
    """
    if m.shape != m_hat.shape:
        raise ShapeMismatchError(f"m {tuple(m.shape)} vs m_hat {tuple(m_hat.shape)}")
    huber = nn.SmoothL1Loss(reduction="none", beta=1.0)
    if frame_mask is None:
        recon = huber(m_hat, m).mean()
        vel = huber(time_diff(m_hat.transpose(1, 2)), time_diff(m.transpose(1, 2))).mean()
    else:
        fm = frame_mask.to(m.dtype)[..., None]
        recon = (huber(m_hat, m) * fm).sum() / (fm.sum() * m.shape[-1])
        vm = (frame_mask[:, 1:] & frame_mask[:, :-1]).to(m.dtype)[:, None, :]
        dv = huber(time_diff(m_hat.transpose(1, 2)), time_diff(m.transpose(1, 2)))
        vel = (dv * vm).sum() / (vm.sum() * m.shape[-1])
    align = ((z.detach() - z_q) ** 2).mean()
    commit = ((z - z_q.detach()) ** 2).mean()
    total = recon + alpha * vel + align + beta * commit
    parts = {
        "reconstruction": float(recon.detach()),
        "velocity": float(vel.detach()),
        "alignment": float(align.detach()),
        "commitment": float(commit.detach()),
    }
    return total, parts
