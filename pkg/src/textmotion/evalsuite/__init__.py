"""Quantitative evaluation: retrieval, distribution, and matching metrics."""
from .metrics import (FidResult, DiversityResult, MultimodalityResult,
                      RPrecisionResult, fid, diversity, multimodality,
                      mm_dist, r_precision)
from .extractors import (EvalExtractorConfig, EvalFeatureExtractors,
                         train_eval_extractors)
from .matching import MatchingReport, modality_matching_eval
from .t2m import T2MReport, text_to_motion_eval

__all__ = [
    "FidResult", "DiversityResult", "MultimodalityResult", "RPrecisionResult",
    "fid", "diversity", "multimodality", "mm_dist", "r_precision",
    "EvalExtractorConfig", "EvalFeatureExtractors", "train_eval_extractors",
    "MatchingReport", "modality_matching_eval",
    "T2MReport", "text_to_motion_eval",
]
