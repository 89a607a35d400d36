"""Minimal end-to-end run: corpus -> three experts -> generator -> motion.

Everything is sized to finish in about a minute on one CPU core; the
point is the wiring, not the quality of the motions.
"""
from textmotion.gpt import GPTConfig
from textmotion.gpt_training import GPTTrainConfig, train_gpt
from textmotion.preprocess import train_norm_stats
from textmotion.sampler import SamplingConfig, generate
from textmotion.synthetic import SyntheticSpec, make_synthetic_dataset
from textmotion.textenc import make_text_encoder
from textmotion.vq_training import VQTrainConfig, train_vqvae
from textmotion.vqvae import VQConfig

N_CODES, CODE_DIM = 16, 8


def main():
    dataset = make_synthetic_dataset(
        SyntheticSpec(n_clips=150, p_hand=0.7, p_face=0.7, seed=4,
                      body_vocab=("walk", "squat", "wave", "turn"),
                      hand_vocab=("fist", "point"),
                      face_vocab=("smile", "frown")))
    stats = train_norm_stats(dataset)
    n = lambda s: len(dataset.splits[s])  # noqa: E731
    print(f"corpus: {len(dataset.clips)} clips "
          f"(train/val/test {n('train')}/{n('val')}/{n('test')})")

    experts = {}
    for i, mod in enumerate(("body", "hand", "face")):
        cfg = VQConfig(modality=mod, n_codes=N_CODES, code_dim=CODE_DIM, hidden=24)
        tc = VQTrainConfig(steps=150, batch_size=16, window=48, seed=i)
        experts[mod] = train_vqvae(dataset, cfg, tc, stats=stats).expert
        print(f"{mod} expert trained, usage "
              f"{train_usage(experts[mod], dataset, stats, mod):.0%}")

    arch = GPTConfig(d_model=48, n_heads=4, n_base_layers=1, n_branch_layers=1,
                     text_width=128, max_tokens=24,
                     n_body_codes=N_CODES, n_hand_codes=N_CODES,
                     n_face_codes=N_CODES, body_code_dim=CODE_DIM)
    tc = GPTTrainConfig(steps=250, batch_size=16, consistency_warmup=125, seed=7)
    result = train_gpt(dataset, experts, arch, tc, stats=stats)
    tail = result.history[-1]
    print(f"generator trained: body CE {tail['body_ce']:.3f}, "
          f"hand CE {tail['hand_ce']:.3f}, face CE {tail['face_ce']:.3f}, "
          f"alignment {tail['consistency']:.3f}")

    encoder = make_text_encoder("hashed_bow", arch.text_width)
    for text in ("a person walks forward while smiling and pointing",
                 "someone squats down with clenched fists, frowning"):
        motion = generate(result.model, experts, encoder, text,
                          SamplingConfig(mode="greedy", seed=0), fps=30.0)
        print(f"\n'{text}'")
        print(f"  {motion.n_frames} frames, "
              f"{motion.tokens['body'].shape[0]} tokens per stream, "
              f"{len(motion.audit)} premature-end replacements")


def train_usage(expert, dataset, stats, mod) -> float:
    import numpy as np

    seen = set()
    for idx in dataset.splits["train"][:40]:
        track = dataset.get(idx).track(mod)
        if track is None:
            continue
        tokens, _ = expert.encode(stats.normalize(track, mod))
        seen.update(np.unique(tokens).tolist())
    return len(seen) / expert.config.n_codes


if __name__ == "__main__":
    main()
