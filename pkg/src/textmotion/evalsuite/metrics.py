"""Distribution and retrieval metrics over fixed feature spaces.

All statistics run in float64.  Metrics that subsample are deterministic
in their seed argument and shrink their sample size (with a warning)
rather than fail when the input is small.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import NoDataError, ShapeMismatchError


@dataclass
class FidResult:
    value: float
    eig_clip: float    # magnitude of clipped negative eigenvalue mass
    n_a: int
    n_b: int

    def __float__(self):
        return self.value


def _psd_sqrt(sym: np.ndarray) -> tuple[np.ndarray, float]:
    w, v = np.linalg.eigh((sym + sym.T) / 2.0)
    clip = float(-w[w < 0].sum())
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T, clip


def fid(feats_a: np.ndarray, feats_b: np.ndarray) -> FidResult:
    """Frechet distance between Gaussian fits of two feature sets.

    The matrix square root uses symmetric eigendecomposition; tiny
    negative eigenvalues from finite samples are clipped to zero and the
    clipped mass is reported.  Covariances are unbiased (ddof=1).
    """
    a = np.asarray(feats_a, dtype=np.float64)
    b = np.asarray(feats_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeMismatchError(f"feature shapes {a.shape} vs {b.shape}")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise NoDataError("need at least two rows per side for a covariance")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    cov_a = np.atleast_2d(np.cov(a, rowvar=False, ddof=1))
    cov_b = np.atleast_2d(np.cov(b, rowvar=False, ddof=1))
    sqrt_a, clip_a = _psd_sqrt(cov_a)
    inner = sqrt_a @ cov_b @ sqrt_a
    w, _ = np.linalg.eigh((inner + inner.T) / 2.0)
    clip_inner = float(-w[w < 0].sum())
    tr_sqrt = float(np.sqrt(np.clip(w, 0.0, None)).sum())
    value = float(((mu_a - mu_b) ** 2).sum()
                  + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_sqrt)
    return FidResult(value=value, eig_clip=clip_a + clip_inner,
                     n_a=a.shape[0], n_b=b.shape[0])


@dataclass
class DiversityResult:
    value: float
    n_pairs: int

    def __float__(self):
        return self.value


def diversity(feats: np.ndarray, n_pairs: int = 300, seed: int = 0) -> DiversityResult:
    """Mean distance over disjoint random pairs (no row reuse)."""
    f = np.asarray(feats, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 2:
        raise NoDataError("diversity needs at least two feature rows")
    usable = f.shape[0] // 2
    m = min(n_pairs, usable)
    if m < n_pairs:
        warnings.warn(f"diversity reduced to {m} pairs ({f.shape[0]} rows)")
    perm = np.random.default_rng(seed).permutation(f.shape[0])
    d = np.linalg.norm(f[perm[:m]] - f[perm[m:2 * m]], axis=1)
    return DiversityResult(value=float(d.mean()), n_pairs=m)


@dataclass
class MultimodalityResult:
    value: float
    n_texts: int
    n_pairs: int

    def __float__(self):
        return self.value


def multimodality(feats_by_text: dict[str, np.ndarray], n_pairs: int = 10,
                  seed: int = 0) -> MultimodalityResult:
    """Mean within-text pair distance, averaged over texts.

    Texts with fewer than two generations are skipped; none at all is an
    error.  Pairs are drawn uniformly over distinct index pairs.
    """
    rng = np.random.default_rng(seed)
    per_text = []
    for text in sorted(feats_by_text):
        f = np.asarray(feats_by_text[text], dtype=np.float64)
        if f.shape[0] < 2:
            continue
        i = rng.integers(f.shape[0], size=n_pairs)
        j = rng.integers(f.shape[0] - 1, size=n_pairs)
        j = j + (j >= i)  # distinct partner
        per_text.append(float(np.linalg.norm(f[i] - f[j], axis=1).mean()))
    if not per_text:
        raise NoDataError("no text has two or more generations")
    return MultimodalityResult(value=float(np.mean(per_text)),
                               n_texts=len(per_text), n_pairs=n_pairs)


def mm_dist(query_feats: np.ndarray, target_feats: np.ndarray) -> float:
    """Mean distance between aligned query/target feature rows."""
    q = np.asarray(query_feats, dtype=np.float64)
    t = np.asarray(target_feats, dtype=np.float64)
    if q.shape != t.shape:
        raise ShapeMismatchError(f"paired features differ: {q.shape} vs {t.shape}")
    if q.shape[0] == 0:
        raise NoDataError("no feature rows")
    return float(np.linalg.norm(q - t, axis=1).mean())


@dataclass
class RPrecisionResult:
    top1: float
    top2: float
    top3: float
    ci95: tuple[float, float, float]   # half-widths of the 95% intervals
    pool_size: int
    repetitions: int
    n_pools: int

    def top(self, k: int) -> float:
        return (self.top1, self.top2, self.top3)[k - 1]


def r_precision(query_feats: np.ndarray, gallery_feats: np.ndarray,
                pool_size: int = 32, repetitions: int = 20,
                seed: int = 0) -> RPrecisionResult:
    """Top-1/2/3 retrieval accuracy in random pools.

    Row i of the gallery is the true match of query row i.  Each
    repetition shuffles the rows, splits them into disjoint pools of
    pool_size (remainder dropped), and ranks the true match inside each
    pool by Euclidean distance.  Means and 95% half-widths are taken over
    repetitions.
    """
    q = np.asarray(query_feats, dtype=np.float64)
    g = np.asarray(gallery_feats, dtype=np.float64)
    if q.shape != g.shape:
        raise ShapeMismatchError(f"query {q.shape} vs gallery {g.shape}")
    n = q.shape[0]
    if n < 2:
        raise NoDataError("retrieval needs at least two rows")
    if n < pool_size:
        warnings.warn(f"pool reduced from {pool_size} to {n}")
        pool_size = n
    rng = np.random.default_rng(seed)
    acc = np.zeros((repetitions, 3))
    n_pools = n // pool_size
    for rep in range(repetitions):
        perm = rng.permutation(n)
        hits = np.zeros(3)
        count = 0
        for p in range(n_pools):
            pool = perm[p * pool_size:(p + 1) * pool_size]
            d = np.linalg.norm(q[pool][:, None, :] - g[pool][None, :, :], axis=2)
            true = np.diagonal(d)
            rank = (d < true[:, None]).sum(axis=1)
            for k in range(3):
                hits[k] += (rank <= k).sum()
            count += pool.shape[0]
        acc[rep] = hits / count
    mean = acc.mean(axis=0)
    half = 1.96 * acc.std(axis=0, ddof=1) / np.sqrt(repetitions) if repetitions > 1 \
        else np.zeros(3)
    return RPrecisionResult(top1=float(mean[0]), top2=float(mean[1]), top3=float(mean[2]),
                            ci95=(float(half[0]), float(half[1]), float(half[2])),
                            pool_size=pool_size, repetitions=repetitions, n_pools=n_pools)
