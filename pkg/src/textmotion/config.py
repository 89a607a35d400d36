"""Experiment configuration: one strict, serializable tree for all stages.

Unknown keys anywhere in the tree are rejected so typos fail loudly.
Command-line overrides use dotted paths ("gpt.train.steps=300"); values
parse as JSON when possible, else as strings.  Every command writes the
fully resolved tree next to its outputs.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .gpt import GPTConfig
from .gpt_training import GPTTrainConfig
from .evalsuite.extractors import EvalExtractorConfig
from .sampler import SamplingConfig
from .synthetic import SyntheticSpec
from .vqvae import VQConfig
from .vq_training import VQTrainConfig

SEED_ENV_VAR = "T2MX_SEED"


@dataclass
class PrepConfig:
    target_fps: float = 30.0
    smooth_cutoff: float = 6.0
    smooth: bool = False
    mirror_augment: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "PrepConfig":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown PrepConfig keys: {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ExpertBlock:
    vq: VQConfig
    train: VQTrainConfig

    @classmethod
    def from_dict(cls, modality: str, d: dict) -> "ExpertBlock":
        extra = set(d) - {"vq", "train"}
        if extra:
            raise ConfigError(f"unknown expert keys for {modality}: {sorted(extra)}")
        vq = dict(d.get("vq", {}))
        vq["modality"] = modality
        return cls(vq=VQConfig.from_dict(vq), train=VQTrainConfig.from_dict(d.get("train", {})))

    def to_dict(self) -> dict:
        return {"vq": self.vq.to_dict(), "train": self.train.to_dict()}


@dataclass
class EvalBlock:
    pool_size: int = 32
    repetitions: int = 20
    diversity_pairs: int = 300
    mmod_pairs: int = 10
    repeats_per_text: int = 2
    split: str = "test"
    extractor: EvalExtractorConfig = field(default_factory=EvalExtractorConfig)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalBlock":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown EvalBlock keys: {sorted(extra)}")
        d = dict(d)
        if "extractor" in d:
            d["extractor"] = EvalExtractorConfig.from_dict(d["extractor"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["extractor"] = self.extractor.to_dict()
        return d


@dataclass
class GPTBlock:
    arch: GPTConfig
    train: GPTTrainConfig

    @classmethod
    def from_dict(cls, d: dict) -> "GPTBlock":
        extra = set(d) - {"arch", "train"}
        if extra:
            raise ConfigError(f"unknown gpt keys: {sorted(extra)}")
        return cls(arch=GPTConfig.from_dict(d.get("arch", {})),
                   train=GPTTrainConfig.from_dict(d.get("train", {})))

    def to_dict(self) -> dict:
        return {"arch": self.arch.to_dict(), "train": self.train.to_dict()}


@dataclass
class SamplingBlock:
    mode: str = "greedy"
    temperature: float = 1.0
    top_k: int | None = 10
    max_tokens: int | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "SamplingBlock":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown sampling keys: {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_sampling_config(self, seed: int) -> SamplingConfig:
        return SamplingConfig(mode=self.mode, temperature=self.temperature,
                              top_k=self.top_k, max_tokens=self.max_tokens, seed=seed)


@dataclass
class ExperimentConfig:
    workdir: str = "runs/desk"
    seed: int = 0
    threads: int | None = None
    data: SyntheticSpec = field(default_factory=SyntheticSpec)
    prep: PrepConfig = field(default_factory=PrepConfig)
    experts: dict[str, ExpertBlock] = field(default_factory=dict)
    gpt: GPTBlock = field(default_factory=lambda: GPTBlock(GPTConfig(), GPTTrainConfig()))
    sampling: SamplingBlock = field(default_factory=SamplingBlock)
    eval: EvalBlock = field(default_factory=EvalBlock)

    def __post_init__(self):
        for mod in ("body", "hand", "face"):
            if mod not in self.experts:
                self.experts[mod] = ExpertBlock.from_dict(mod, {})

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {"workdir", "seed", "threads", "data", "prep", "experts",
                 "gpt", "sampling", "eval"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown ExperimentConfig keys: {sorted(extra)}")
        kw: dict[str, Any] = {}
        for key in ("workdir", "seed", "threads"):
            if key in d:
                kw[key] = d[key]
        if "data" in d:
            data = dict(d["data"])
            extra = set(data) - set(SyntheticSpec.__dataclass_fields__)
            if extra:
                raise ConfigError(f"unknown data keys: {sorted(extra)}")
            for tup in ("duration_range", "body_vocab", "hand_vocab", "face_vocab"):
                if tup in data:
                    data[tup] = tuple(data[tup])
            kw["data"] = SyntheticSpec(**data)
        if "prep" in d:
            kw["prep"] = PrepConfig.from_dict(d["prep"])
        if "experts" in d:
            extra = set(d["experts"]) - {"body", "hand", "face"}
            if extra:
                raise ConfigError(f"unknown expert modalities: {sorted(extra)}")
            kw["experts"] = {m: ExpertBlock.from_dict(m, block)
                             for m, block in d["experts"].items()}
        if "gpt" in d:
            kw["gpt"] = GPTBlock.from_dict(d["gpt"])
        if "sampling" in d:
            kw["sampling"] = SamplingBlock.from_dict(d["sampling"])
        if "eval" in d:
            kw["eval"] = EvalBlock.from_dict(d["eval"])
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "workdir": self.workdir, "seed": self.seed, "threads": self.threads,
            "data": {k: (list(v) if isinstance(v, tuple) else v)
                     for k, v in asdict(self.data).items()},
            "prep": self.prep.to_dict(),
            "experts": {m: b.to_dict() for m, b in self.experts.items()},
            "gpt": self.gpt.to_dict(),
            "sampling": self.sampling.to_dict(),
            "eval": self.eval.to_dict(),
        }

    @classmethod
    def load(cls, path: Path | str) -> "ExperimentConfig":
        try:
            payload = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        return cls.from_dict(payload)

    def save(self, path: Path | str):
        from .containers import atomic_write_json

        atomic_write_json(Path(path), self.to_dict())


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(tree: dict, overrides: list[str]) -> dict:
    """Apply "a.b.c=value" assignments to a nested config dict."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form path=value")
        path, raw = item.split("=", 1)
        keys = path.split(".")
        node = tree
        for k in keys[:-1]:
            if not isinstance(node, dict):
                raise ConfigError(f"override path {path!r} crosses a leaf")
            node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override path {path!r} crosses a leaf")
        node[keys[-1]] = _parse_value(raw)
    return tree


def resolve_seed(flag_value: int | None, config_seed: int) -> int:
    """Priority: explicit flag, then the T2MX_SEED variable, then config."""
    if flag_value is not None:
        return flag_value
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError as e:
            raise ConfigError(f"{SEED_ENV_VAR}={env!r} is not an integer") from e
    return config_seed


def load_config(path: Path | str | None, overrides: list[str]) -> ExperimentConfig:
    tree = {} if path is None else json.loads(Path(path).read_text())
    if not isinstance(tree, dict):
        raise ConfigError(f"config root must be an object, got {type(tree).__name__}")
    apply_overrides(tree, overrides)
    return ExperimentConfig.from_dict(tree)
