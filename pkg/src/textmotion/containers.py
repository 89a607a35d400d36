"""On-disk clip container (MX1), corpus index, and dataset directory IO.

Each clip is stored as a JSON header `<id>.json` plus one raw array file
per present modality, `<id>.body.f32` / `<id>.hand.f32` / `<id>.face.f32`,
holding row-major little-endian float32 frames.  A dataset directory adds
`corpus.jsonl` (one {id, text, split} record per clip), `skeleton.json`,
and optionally `norm_stats.json`.  All writes go through a temp file and
an atomic rename.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .clip import MotionClip, MotionDataset, NormStats
from .errors import ContainerError
from .pose import MODALITIES, MODALITY_DIMS
from .skeleton import Skeleton, default_skeleton

MX1_VERSION = 1


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_json(path: Path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def save_clip(clip: MotionClip, directory: Path) -> None:
    """Write one clip in container form into `directory`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    mask = clip.modality_mask
    header = {
        "version": MX1_VERSION,
        "id": clip.id,
        "fps": clip.fps,
        "T": clip.n_frames,
        "modality_mask": list(mask),
        "channel_widths": {m: MODALITY_DIMS[m] for m, p in zip(MODALITIES, mask) if p},
        "text": list(clip.texts),
    }
    if clip.labels:
        header["labels"] = clip.labels
    for m, present in zip(MODALITIES, mask):
        if not present:
            continue
        arr = np.ascontiguousarray(getattr(clip, m), dtype="<f4")
        atomic_write_bytes(directory / f"{clip.id}.{m}.f32", arr.tobytes())
    atomic_write_json(directory / f"{clip.id}.json", header)


def load_clip(directory: Path, clip_id: str) -> MotionClip:
    """Read one clip back; raises ContainerError on any malformation."""
    directory = Path(directory)
    header_path = directory / f"{clip_id}.json"
    if not header_path.exists():
        raise ContainerError(f"missing header {header_path}")
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as e:
        raise ContainerError(f"unreadable header {header_path}: {e}") from e
    for key in ("version", "id", "fps", "T", "modality_mask", "channel_widths", "text"):
        if key not in header:
            raise ContainerError(f"{header_path} missing field {key!r}")
    if header["version"] != MX1_VERSION:
        raise ContainerError(f"unsupported container version {header['version']}")
    if header["id"] != clip_id:
        raise ContainerError(f"header id {header['id']!r} does not match file {clip_id!r}")
    T = int(header["T"])
    mask = header["modality_mask"]
    if len(mask) != 3 or not mask[0]:
        raise ContainerError(f"bad modality_mask {mask} in {header_path}")
    tracks = {}
    for m, present in zip(MODALITIES, mask):
        if not present:
            tracks[m] = None
            continue
        width = int(header["channel_widths"].get(m, -1))
        if width != MODALITY_DIMS[m]:
            raise ContainerError(
                f"{clip_id}: {m} width {width}, expected {MODALITY_DIMS[m]}")
        raw_path = directory / f"{clip_id}.{m}.f32"
        if not raw_path.exists():
            raise ContainerError(f"missing track file {raw_path}")
        raw = np.frombuffer(raw_path.read_bytes(), dtype="<f4")
        if raw.size != T * width:
            raise ContainerError(
                f"{raw_path} holds {raw.size} floats, expected {T}x{width}")
        tracks[m] = raw.reshape(T, width).copy()
    return MotionClip(
        id=clip_id, fps=float(header["fps"]), body=tracks["body"],
        hand=tracks["hand"], face=tracks["face"], texts=list(header["text"]),
        labels=dict(header.get("labels", {})),
    )


def save_dataset(dataset: MotionDataset, directory: Path,
                 skeleton: Skeleton | None = None,
                 stats: NormStats | None = None) -> None:
    directory = Path(directory)
    clips_dir = directory / "clips"
    clips_dir.mkdir(parents=True, exist_ok=True)
    for clip in dataset.clips:
        save_clip(clip, clips_dir)
    split_of = {}
    for name, ids in dataset.splits.items():
        for i in ids:
            split_of[i] = name
    lines = []
    for clip in dataset.clips:
        rec = {"id": clip.id, "text": list(clip.texts),
               "split": split_of.get(clip.id, "")}
        lines.append(json.dumps(rec, sort_keys=True))
    atomic_write_text(directory / "corpus.jsonl", "\n".join(lines) + "\n")
    atomic_write_json(directory / "skeleton.json",
                      (skeleton or default_skeleton()).to_json())
    if stats is not None:
        atomic_write_json(directory / "norm_stats.json", stats.to_dict())


def load_dataset(directory: Path) -> MotionDataset:
    directory = Path(directory)
    corpus_path = directory / "corpus.jsonl"
    if not corpus_path.exists():
        raise ContainerError(f"missing corpus index {corpus_path}")
    clips, splits = [], {}
    fps = None
    for line_no, line in enumerate(corpus_path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise ContainerError(f"{corpus_path}:{line_no}: bad record: {e}") from e
        if "id" not in rec:
            raise ContainerError(f"{corpus_path}:{line_no}: record missing id")
        clip = load_clip(directory / "clips", rec["id"])
        if rec.get("split"):
            splits.setdefault(rec["split"], []).append(clip.id)
        clips.append(clip)
        fps = clip.fps if fps is None else fps
    if not clips:
        raise ContainerError(f"{corpus_path} lists no clips")
    return MotionDataset(clips=clips, splits=splits, fps=fps or 30.0)


def load_skeleton(directory: Path) -> Skeleton:
    path = Path(directory) / "skeleton.json"
    if not path.exists():
        return default_skeleton()
    try:
        return Skeleton.from_json(json.loads(path.read_text()))
    except (json.JSONDecodeError, KeyError, ValueError) as e:
        raise ContainerError(f"bad skeleton file {path}: {e}") from e


def load_norm_stats(directory: Path) -> NormStats | None:
    path = Path(directory) / "norm_stats.json"
    if not path.exists():
        return None
    try:
        return NormStats.from_dict(json.loads(path.read_text()))
    except (json.JSONDecodeError, KeyError) as e:
        raise ContainerError(f"bad normalization stats {path}: {e}") from e
