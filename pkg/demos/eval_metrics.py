"""Score a tiny trained generator with the retrieval and FID suites.

Trains everything small (a couple of minutes on CPU), generates motions
for held-out texts, then prints the text-to-motion table (R-Precision,
FID, diversity, multimodality) and the cross-stream matching table.
"""
from textmotion.evalsuite import (modality_matching_eval, text_to_motion_eval,
                                  train_eval_extractors)
from textmotion.evalsuite.extractors import EvalExtractorConfig
from textmotion.gpt import GPTConfig
from textmotion.gpt_training import GPTTrainConfig, train_gpt
from textmotion.preprocess import train_norm_stats
from textmotion.sampler import SamplingConfig, generate_many
from textmotion.synthetic import SyntheticSpec, make_synthetic_dataset
from textmotion.textenc import make_text_encoder
from textmotion.vq_training import VQTrainConfig, train_vqvae
from textmotion.vqvae import VQConfig


def main():
    dataset = make_synthetic_dataset(
        SyntheticSpec(n_clips=300, p_hand=0.8, p_face=0.8, seed=6))
    stats = train_norm_stats(dataset)

    experts = {}
    for i, mod in enumerate(("body", "hand", "face")):
        cfg = VQConfig(modality=mod, n_codes=32, code_dim=16, hidden=48)
        experts[mod] = train_vqvae(
            dataset, cfg, VQTrainConfig(steps=300, batch_size=16, window=48,
                                        seed=i), stats=stats).expert
    print("experts trained")

    arch = GPTConfig(d_model=64, n_heads=4, n_base_layers=2, n_branch_layers=1,
                     text_width=256, max_tokens=32, n_body_codes=32,
                     n_hand_codes=32, n_face_codes=32, body_code_dim=16)
    tc = GPTTrainConfig(steps=500, batch_size=16, consistency_warmup=250,
                        lambdas=(0.25, 0.25, 0.25), seed=9)
    model = train_gpt(dataset, experts, arch, tc, stats=stats).model
    print("generator trained")

    extractors = train_eval_extractors(
        dataset, EvalExtractorConfig(epochs=15, seed=2), stats)
    test_clips = [dataset.get(i) for i in dataset.splits["test"]]
    texts = [c.texts[0] for c in test_clips]
    encoder = make_text_encoder("hashed_bow", arch.text_width)
    generated = generate_many(model, experts, encoder, texts,
                              SamplingConfig(mode="greedy", seed=0),
                              fps=30.0, skip_empty=True)
    generated += generate_many(model, experts, encoder, texts,
                               SamplingConfig(mode="sample", top_k=10, seed=1),
                               fps=30.0, skip_empty=True)
    print(f"{len(generated)} motions for {len(texts)} held-out texts\n")

    t2m = text_to_motion_eval(generated, test_clips, extractors, seed=0,
                              pool_size=16, repetitions=10,
                              diversity_pairs=100, mmod_pairs=5)
    print(t2m.to_csv())
    match = modality_matching_eval(generated, extractors, test_clips, seed=0,
                                   pool_size=16, repetitions=10)
    print(match.to_csv())


if __name__ == "__main__":
    main()
