"""Generate one motion and recover world-space joint positions.

The generator works in the root-relative channel layout; forward
kinematics (with the two-bone leg solver re-pinning the ankles) turns
that into plottable (T, 21, 3) world positions.
"""
import json
from pathlib import Path

import numpy as np

from textmotion.gpt import GPTConfig
from textmotion.gpt_training import GPTTrainConfig, train_gpt
from textmotion.kinematics import compose_visual_pose
from textmotion.preprocess import train_norm_stats
from textmotion.sampler import SamplingConfig, generate
from textmotion.skeleton import BODY_JOINT_NAMES, default_skeleton
from textmotion.synthetic import SyntheticSpec, make_synthetic_dataset
from textmotion.textenc import make_text_encoder
from textmotion.vq_training import VQTrainConfig, train_vqvae
from textmotion.vqvae import VQConfig

OUT = Path("out_positions.json")


def main():
    dataset = make_synthetic_dataset(SyntheticSpec(n_clips=150, seed=3))
    stats = train_norm_stats(dataset)

    experts = {}
    for i, mod in enumerate(("body", "hand", "face")):
        cfg = VQConfig(modality=mod, n_codes=16, code_dim=8, hidden=24)
        experts[mod] = train_vqvae(
            dataset, cfg, VQTrainConfig(steps=200, batch_size=16, window=48,
                                        seed=i), stats=stats).expert

    arch = GPTConfig(d_model=48, n_heads=4, n_base_layers=1, n_branch_layers=1,
                     text_width=128, max_tokens=24, n_body_codes=16,
                     n_hand_codes=16, n_face_codes=16, body_code_dim=8)
    model = train_gpt(dataset, experts, arch,
                      GPTTrainConfig(steps=250, batch_size=16,
                                     use_consistency=False, seed=5),
                      stats=stats).model

    text = "a person marches in place with an open palm"
    encoder = make_text_encoder("hashed_bow", arch.text_width)
    motion = generate(model, experts, encoder, text,
                      SamplingConfig(mode="greedy", seed=0), fps=30.0)

    vis = compose_visual_pose(motion.body, default_skeleton())
    pos = vis.positions
    print(f"'{text}': {pos.shape[0]} frames, {pos.shape[1]} joints")
    heights = pos[:, BODY_JOINT_NAMES.index("head"), 1]
    left_foot = pos[:, BODY_JOINT_NAMES.index("left_ankle"), 1]
    print(f"head height range   {heights.min():.3f} .. {heights.max():.3f} m")
    print(f"left ankle height   {left_foot.min():.3f} .. {left_foot.max():.3f} m")

    OUT.write_text(json.dumps({
        "text": text, "fps": 30.0,
        "joint_names": list(BODY_JOINT_NAMES),
        "positions": np.round(pos, 6).tolist(),
    }))
    print(f"wrote {OUT} ({OUT.stat().st_size // 1024} KiB); "
          "positions[t][j] is [x, y, z] with y up")


if __name__ == "__main__":
    main()
