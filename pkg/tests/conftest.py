"""Session fixtures for the acceptance gate.

The desk pipeline (corpus, three experts, sequence model with and without
the cross-stream alignment loss, metric extractors) trains once per
session and is shared by the end-to-end criteria.
"""
import dataclasses
import time
from pathlib import Path
from types import SimpleNamespace

import pytest

PROFILE = Path(__file__).resolve().parents[1] / "profiles" / "desk.json"


@pytest.fixture(scope="session")
def desk_pipeline():
    from textmotion.batching import tokenize_dataset
    from textmotion.config import ExperimentConfig
    from textmotion.evalsuite import train_eval_extractors
    from textmotion.gpt_training import train_gpt
    from textmotion.preprocess import train_norm_stats
    from textmotion.synthetic import make_synthetic_dataset
    from textmotion.textenc import make_text_encoder
    from textmotion.vq_training import train_vqvae

    t0 = time.monotonic()
    cfg = ExperimentConfig.load(PROFILE)
    dataset = make_synthetic_dataset(cfg.data)
    stats = train_norm_stats(dataset)
    experts = {}
    for mod in ("body", "hand", "face"):
        block = cfg.experts[mod]
        experts[mod] = train_vqvae(dataset, block.vq, block.train, stats=stats).expert
    tokenized = tokenize_dataset(experts, dataset, stats, cfg.gpt.train.split,
                                 cfg.gpt.arch.max_tokens)
    on = train_gpt(dataset, experts, cfg.gpt.arch, cfg.gpt.train, stats=stats,
                   tokenized=tokenized)
    off_tc = dataclasses.replace(cfg.gpt.train, use_consistency=False)
    off = train_gpt(dataset, experts, cfg.gpt.arch, off_tc, stats=stats,
                    tokenized=tokenized)
    extractors = train_eval_extractors(dataset, cfg.eval.extractor, stats)
    test_clips = [dataset.get(i) for i in dataset.splits["test"]]
    encoder = make_text_encoder(cfg.gpt.train.text_encoder, cfg.gpt.arch.text_width)
    return SimpleNamespace(
        cfg=cfg, dataset=dataset, stats=stats, experts=experts,
        model_on=on.model, model_off=off.model, extractors=extractors,
        test_clips=test_clips, encoder=encoder,
        train_seconds=time.monotonic() - t0)
