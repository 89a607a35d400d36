"""Deterministic text featurizers.

The default encoder hashes whitespace 1- and 2-grams into a fixed-width
bag with sha256 (process-independent, unlike the builtin hash), L2
normalized.  Models apply their own learned projection on top.  A
CLIP-shaped adapter stub keeps the external-encoder interface pluggable
without the dependency.
"""
from __future__ import annotations

import hashlib
from typing import Protocol, runtime_checkable

import numpy as np

TEXT_FEATURE_WIDTH = 512


@runtime_checkable
class TextEncoder(Protocol):
    """Same text in, same vector out; width is fixed per encoder."""

    width: int

    def featurize(self, texts: list[str]) -> np.ndarray: ...


def _bucket(token: str, n_bins: int) -> int:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % n_bins


class HashedBowEncoder:
    """Hashed bag of 1/2-grams over whitespace tokens."""

    def __init__(self, width: int = TEXT_FEATURE_WIDTH):
        self.width = width

    def featurize(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.width), dtype=np.float32)
        for i, text in enumerate(texts):
            words = text.lower().split()
            grams = words + [f"{a} {b}" for a, b in zip(words, words[1:])]
            for g in grams:
                out[i, _bucket(g, self.width)] += 1.0
            norm = np.linalg.norm(out[i])
            if norm > 0:
                out[i] /= norm
        return out


class ClipAdapterStub:
    """Placeholder with the shape of an external sentence encoder.

    Produces a deterministic pseudo-embedding (sha256-seeded Gaussian) so
    pipelines wired for an external encoder stay runnable offline.  Not a
    semantic model; swap in a real adapter for meaningful features.
    """

    def __init__(self, width: int = TEXT_FEATURE_WIDTH):
        self.width = width

    def featurize(self, texts: list[str]) -> np.ndarray:
        out = np.empty((len(texts), self.width), dtype=np.float32)
        for i, text in enumerate(texts):
            seed = int.from_bytes(
                hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")
            vec = np.random.default_rng(seed).normal(size=self.width)
            out[i] = (vec / np.linalg.norm(vec)).astype(np.float32)
        return out


_ENCODERS = {"hashed_bow": HashedBowEncoder, "clip_stub": ClipAdapterStub}


def make_text_encoder(name: str, width: int = TEXT_FEATURE_WIDTH) -> TextEncoder:
    if name not in _ENCODERS:
        raise KeyError(f"unknown text encoder {name!r}; have {sorted(_ENCODERS)}")
    return _ENCODERS[name](width)
