"""Text-to-motion suite: retrieval, distribution, and diversity table."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import NoDataError
from .extractors import EvalFeatureExtractors
from .metrics import (diversity, fid, mm_dist, multimodality, r_precision)

_CSV_COLUMNS = ("method", "rprec_top1", "rprec_top1_ci", "rprec_top2", "rprec_top2_ci",
                "rprec_top3", "rprec_top3_ci", "fid", "mm_dist", "diversity",
                "multimodality")


@dataclass
class T2MReport:
    rows: dict[str, dict]
    extractor_fingerprint: str
    seed: int
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"suite": "t2m", "seed": self.seed,
                "extractor_fingerprint": self.extractor_fingerprint,
                "rows": self.rows, "meta": self.meta}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        lines = [",".join(_CSV_COLUMNS)]
        for name, row in self.rows.items():
            cells = [name]
            rp = row["r_precision"]
            for k in (1, 2, 3):
                cells.append(f"{rp[f'top{k}']:.4f}")
                cells.append(f"{rp['ci95'][k - 1]:.4f}")
            cells.append(f"{row['fid']:.4f}")
            cells.append(f"{row['mm_dist']:.4f}")
            cells.append(f"{row['diversity']:.4f}")
            mm = row["multimodality"]
            cells.append("" if mm is None else f"{mm:.4f}")
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def _rp_dict(rp) -> dict:
    return {"top1": rp.top1, "top2": rp.top2, "top3": rp.top3,
            "ci95": list(rp.ci95), "pool_size": rp.pool_size,
            "repetitions": rp.repetitions, "n_pools": rp.n_pools}


def _group_by_text(texts: list[str], feats: np.ndarray) -> dict[str, np.ndarray]:
    groups: dict[str, list[int]] = {}
    for i, t in enumerate(texts):
        groups.setdefault(t, []).append(i)
    return {t: feats[idx] for t, idx in groups.items()}


def text_to_motion_eval(generated, real_clips, extractors: EvalFeatureExtractors,
                        seed: int = 0, pool_size: int = 32, repetitions: int = 20,
                        diversity_pairs: int = 300, mmod_pairs: int = 10) -> T2MReport:
    """Score generated motions against their texts and the real corpus.

    generated: objects with .text plus .body/.hand/.face tracks.
    real_clips: reference MotionClips (hand/face may be missing; clip
    features average whichever tracks exist).  The real row reports
    split-half FID so its scale is comparable.
    """
    if not generated:
        raise NoDataError("no generated motions to evaluate")
    gen_texts = [g.text for g in generated]
    gen_motion = extractors.clip_features(generated)
    gen_text = extractors.text_features(gen_texts)
    real_texts = [c.texts[0] for c in real_clips]
    real_motion = extractors.clip_features(real_clips)
    real_text = extractors.text_features(real_texts)

    rows = {}
    rng = np.random.default_rng(seed)
    half = rng.permutation(real_motion.shape[0])
    mid = real_motion.shape[0] // 2
    real_fid = fid(real_motion[half[:mid]], real_motion[half[mid:]]) if mid >= 2 else None
    try:
        real_mmod = multimodality(_group_by_text(real_texts, real_motion),
                                  mmod_pairs, seed).value
    except NoDataError:
        real_mmod = None
    real_div = diversity(real_motion, diversity_pairs, seed)
    rows["real"] = {
        "r_precision": _rp_dict(r_precision(real_motion, real_text, pool_size,
                                            repetitions, seed)),
        "fid": 0.0 if real_fid is None else real_fid.value,
        "fid_eig_clip": 0.0 if real_fid is None else real_fid.eig_clip,
        "mm_dist": mm_dist(real_motion, real_text),
        "diversity": real_div.value, "diversity_pairs": real_div.n_pairs,
        "multimodality": real_mmod, "n": real_motion.shape[0],
    }

    gen_fid = fid(gen_motion, real_motion)
    try:
        gen_mmod = multimodality(_group_by_text(gen_texts, gen_motion),
                                 mmod_pairs, seed).value
    except NoDataError:
        gen_mmod = None
    gen_div = diversity(gen_motion, diversity_pairs, seed)
    rows["generated"] = {
        "r_precision": _rp_dict(r_precision(gen_motion, gen_text, pool_size,
                                            repetitions, seed)),
        "fid": gen_fid.value, "fid_eig_clip": gen_fid.eig_clip,
        "mm_dist": mm_dist(gen_motion, gen_text),
        "diversity": gen_div.value, "diversity_pairs": gen_div.n_pairs,
        "multimodality": gen_mmod, "n": gen_motion.shape[0],
    }
    return T2MReport(rows=rows, extractor_fingerprint=extractors.fingerprint,
                     seed=seed, meta={"pool_size": pool_size, "repetitions": repetitions})
