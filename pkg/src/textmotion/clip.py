"""Motion clips, datasets, and channel normalization."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ShapeMismatchError, TooShortError
from .pose import BODY_DIM, FACE_DIM, HAND_DIM, MODALITY_DIMS


@dataclass
class MotionClip:
    """A motion sequence with optional hand/face tracks and its captions.

    body is (T, 260) float32 and always present; hand (T, 180) and face
    (T, 56) are None when the clip was not annotated with that modality.
    All present tracks share the same frame count and rate.
    """

    id: str
    fps: float
    body: np.ndarray
    hand: np.ndarray | None = None
    face: np.ndarray | None = None
    texts: list[str] = field(default_factory=list)
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        self.body = np.ascontiguousarray(self.body, dtype=np.float32)
        if self.body.ndim != 2 or self.body.shape[1] != BODY_DIM:
            raise ShapeMismatchError(f"body must be (T,{BODY_DIM}), got {self.body.shape}")
        if self.body.shape[0] < 2:
            raise TooShortError(f"clip {self.id!r} has {self.body.shape[0]} frames")
        T = self.body.shape[0]
        if self.hand is not None:
            self.hand = np.ascontiguousarray(self.hand, dtype=np.float32)
            if self.hand.shape != (T, HAND_DIM):
                raise ShapeMismatchError(f"hand must be ({T},{HAND_DIM}), got {self.hand.shape}")
        if self.face is not None:
            self.face = np.ascontiguousarray(self.face, dtype=np.float32)
            if self.face.shape != (T, FACE_DIM):
                raise ShapeMismatchError(f"face must be ({T},{FACE_DIM}), got {self.face.shape}")
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")

    @property
    def n_frames(self) -> int:
        return int(self.body.shape[0])

    @property
    def modality_mask(self) -> tuple[bool, bool, bool]:
        return (True, self.hand is not None, self.face is not None)

    def track(self, modality: str) -> np.ndarray | None:
        if modality not in MODALITY_DIMS:
            raise KeyError(modality)
        return getattr(self, modality if modality != "body" else "body")

    def with_tracks(self, body=None, hand="keep", face="keep") -> "MotionClip":
        """Copy with replaced tracks; pass None explicitly to drop one."""
        kw = {}
        if body is not None:
            kw["body"] = body
        if not (isinstance(hand, str) and hand == "keep"):
            kw["hand"] = hand
        if not (isinstance(face, str) and face == "keep"):
            kw["face"] = face
        return replace(self, **kw)


@dataclass
class NormStats:
    """Per-channel mean/std for each modality, computed on training frames."""

    mean: dict[str, np.ndarray]
    std: dict[str, np.ndarray]
    eps: float = 1e-6

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "mean": {k: v.tolist() for k, v in self.mean.items()},
            "std": {k: v.tolist() for k, v in self.std.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(
            mean={k: np.asarray(v, dtype=np.float32) for k, v in d["mean"].items()},
            std={k: np.asarray(v, dtype=np.float32) for k, v in d["std"].items()},
            eps=float(d.get("eps", 1e-6)),
        )

    def normalize(self, x: np.ndarray, modality: str) -> np.ndarray:
        return ((x - self.mean[modality]) / (self.std[modality] + self.eps)).astype(np.float32)

    def denormalize(self, x: np.ndarray, modality: str) -> np.ndarray:
        return (x * (self.std[modality] + self.eps) + self.mean[modality]).astype(np.float32)


def compute_norm_stats(clips: list[MotionClip], eps: float = 1e-6) -> NormStats:
    """Channelwise mean/std pooled over all frames of the given clips.

    Hand/face statistics use only the clips annotated with that track.
    """
    mean, std = {}, {}
    for modality in ("body", "hand", "face"):
        rows = [getattr(c, modality) for c in clips if getattr(c, modality) is not None]
        if rows:
            X = np.concatenate(rows, axis=0).astype(np.float64)
            mean[modality] = X.mean(axis=0).astype(np.float32)
            std[modality] = X.std(axis=0).astype(np.float32)
        else:
            d = MODALITY_DIMS[modality]
            mean[modality] = np.zeros(d, dtype=np.float32)
            std[modality] = np.ones(d, dtype=np.float32)
    return NormStats(mean=mean, std=std, eps=eps)


def normalize_clip(clip: MotionClip, stats: NormStats) -> MotionClip:
    return clip.with_tracks(
        body=stats.normalize(clip.body, "body"),
        hand=None if clip.hand is None else stats.normalize(clip.hand, "hand"),
        face=None if clip.face is None else stats.normalize(clip.face, "face"),
    )


def denormalize_clip(clip: MotionClip, stats: NormStats) -> MotionClip:
    return clip.with_tracks(
        body=stats.denormalize(clip.body, "body"),
        hand=None if clip.hand is None else stats.denormalize(clip.hand, "hand"),
        face=None if clip.face is None else stats.denormalize(clip.face, "face"),
    )


@dataclass
class MotionDataset:
    """A named split collection over a shared clip list."""

    clips: list[MotionClip]
    splits: dict[str, list[str]] = field(default_factory=dict)
    fps: float = 30.0

    def __post_init__(self):
        self._by_id = {c.id: c for c in self.clips}
        if len(self._by_id) != len(self.clips):
            raise ValueError("duplicate clip ids")
        for name, ids in self.splits.items():
            missing = [i for i in ids if i not in self._by_id]
            if missing:
                raise KeyError(f"split {name!r} references unknown clips {missing[:3]}")

    def __len__(self) -> int:
        return len(self.clips)

    def get(self, clip_id: str) -> MotionClip:
        return self._by_id[clip_id]

    def split(self, name: str) -> list[MotionClip]:
        return [self._by_id[i] for i in self.splits[name]]
