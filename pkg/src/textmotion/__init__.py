"""Expressive whole-body text-to-motion toolkit.

Tokenized motion experts (one VQ autoencoder per body/hand/face track),
a multi-branch autoregressive generator conditioned on text, joint-space
consistency training for partially annotated corpora, and a retrieval /
distribution-distance evaluation suite, all runnable on a synthetic
procedural corpus at desk scale.
"""
from .clip import (MotionClip, MotionDataset, NormStats, compute_norm_stats,
                   denormalize_clip, normalize_clip)
from .pose import (BODY_DIM, FACE_DIM, HAND_DIM, MODALITIES, WholeBodyPose,
                   derive_foot_contacts, temporal_velocity)
from .skeleton import Skeleton, default_skeleton

__version__ = "0.1.0"

__all__ = [
    "MotionClip", "MotionDataset", "NormStats", "compute_norm_stats",
    "normalize_clip", "denormalize_clip", "WholeBodyPose",
    "derive_foot_contacts", "temporal_velocity", "Skeleton",
    "default_skeleton", "BODY_DIM", "HAND_DIM", "FACE_DIM", "MODALITIES",
    "__version__",
]
