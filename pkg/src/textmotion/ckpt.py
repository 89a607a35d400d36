"""Checkpoint directory utilities shared by the training loops."""
from __future__ import annotations

import hashlib
import random
from pathlib import Path

import numpy as np
import torch

from .containers import atomic_write_bytes, atomic_write_json, atomic_write_text


def capture_rng_state() -> dict:
    return {
        "torch": torch.get_rng_state(),
        "numpy": np.random.get_state(),
        "python": random.getstate(),
    }


def restore_rng_state(state: dict):
    torch.set_rng_state(state["torch"])
    np.random.set_state(state["numpy"])
    random.setstate(state["python"])


def file_sha256(path: Path | str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def checkpoint_fingerprint(ckpt_dir: Path | str, names: tuple[str, ...]) -> str:
    """Stable digest over the named files of a checkpoint directory."""
    h = hashlib.sha256()
    root = Path(ckpt_dir)
    for name in names:
        h.update(name.encode())
        h.update(bytes.fromhex(file_sha256(root / name)))
    return h.hexdigest()


def save_torch_atomic(obj, path: Path | str):
    import io

    buf = io.BytesIO()
    torch.save(obj, buf)
    atomic_write_bytes(Path(path), buf.getvalue())


def append_csv(path: Path, header: str, rows: list[str]):
    """Append rows, writing the header only when the file is new."""
    path = Path(path)
    if path.exists():
        text = path.read_text() + "".join(r + "\n" for r in rows)
    else:
        text = header + "\n" + "".join(r + "\n" for r in rows)
    atomic_write_text(path, text)


__all__ = [
    "capture_rng_state", "restore_rng_state", "file_sha256",
    "checkpoint_fingerprint", "save_torch_atomic", "append_csv",
    "atomic_write_json",
]
