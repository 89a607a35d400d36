"""Cross-modality matching suite.

Measures whether the three streams of one generated motion look like they
belong together: retrieval of the true partner stream in both directions,
paired feature distance, and per-modality realism against the reference
corpus.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..errors import ContractViolationError
from .extractors import EvalFeatureExtractors
from .metrics import fid, mm_dist, r_precision
from .t2m import _rp_dict

PAIRS = (("body", "hand"), ("body", "face"), ("hand", "face"))

_CSV_COLUMNS = ("pair", "fwd_top1", "fwd_top1_ci", "fwd_top2", "fwd_top2_ci",
                "fwd_top3", "fwd_top3_ci", "rev_top1", "rev_top1_ci",
                "rev_top2", "rev_top2_ci", "rev_top3", "rev_top3_ci",
                "mm_dist", "fid_first", "fid_second")


@dataclass
class MatchingReport:
    rows: dict[str, dict]
    extractor_fingerprint: str
    seed: int
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"suite": "matching", "seed": self.seed,
                "extractor_fingerprint": self.extractor_fingerprint,
                "rows": self.rows, "meta": self.meta}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        lines = [",".join(_CSV_COLUMNS)]
        for name, row in self.rows.items():
            cells = [name]
            for direction in ("forward", "reverse"):
                rp = row[direction]
                for k in (1, 2, 3):
                    cells.append(f"{rp[f'top{k}']:.4f}")
                    cells.append(f"{rp['ci95'][k - 1]:.4f}")
            cells.append(f"{row['mm_dist']:.4f}")
            cells.append(f"{row['fid_first']:.4f}")
            cells.append(f"{row['fid_second']:.4f}")
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def modality_matching_eval(items, extractors: EvalFeatureExtractors, real_clips,
                           seed: int = 0, pool_size: int = 32,
                           repetitions: int = 20) -> MatchingReport:
    """Evaluate stream agreement for motions carrying all three tracks.

    items: generated motions (or fully annotated clips).  For each pair
    the forward direction retrieves the second stream given the first.
    Per-modality FID compares item features against the reference clips
    annotated with that modality.
    """
    for i, item in enumerate(items):
        for mod in ("body", "hand", "face"):
            if getattr(item, mod, None) is None:
                raise ContractViolationError(
                    f"item {i} lacks the {mod} stream; matching needs all three")
    feats = {mod: extractors.motion_features([getattr(x, mod) for x in items], mod)
             for mod in ("body", "hand", "face")}
    real_feats = {}
    for mod in ("body", "hand", "face"):
        tracks = [c.track(mod) for c in real_clips if c.track(mod) is not None]
        real_feats[mod] = extractors.motion_features(tracks, mod) if len(tracks) >= 2 else None

    rows = {}
    for a, b in PAIRS:
        fwd = r_precision(feats[a], feats[b], pool_size, repetitions, seed)
        rev = r_precision(feats[b], feats[a], pool_size, repetitions, seed)
        row = {
            "forward": _rp_dict(fwd), "reverse": _rp_dict(rev),
            "mm_dist": mm_dist(feats[a], feats[b]),
        }
        for label, mod in (("first", a), ("second", b)):
            if real_feats[mod] is None:
                row[f"fid_{label}"] = float("nan")
            else:
                row[f"fid_{label}"] = fid(feats[mod], real_feats[mod]).value
        rows[f"{a}-{b}"] = row
    return MatchingReport(rows=rows, extractor_fingerprint=extractors.fingerprint,
                          seed=seed, meta={"pool_size": pool_size,
                                           "repetitions": repetitions,
                                           "n_items": len(items)})
