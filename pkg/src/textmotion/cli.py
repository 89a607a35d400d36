"""Command-line pipeline: prep, train, generate, eval.

Machine-readable artifact paths go to stdout as one JSON object per
command; progress and diagnostics go to stderr.  Exit codes: 2 malformed
input container, 3 missing dependency artifact, 4 empty text prompt,
5 missing or empty dataset split.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import containers
from .ckpt import atomic_write_json, file_sha256
from .clip import MotionDataset
from .config import (ExperimentConfig, PrepConfig, load_config, resolve_seed)
from .containers import ContainerError, atomic_write_text
from .errors import ConfigError, EmptyMotionError, NoDataError, TextMotionError
from .gpt_training import GPTTrainConfig, load_gpt, train_gpt
from .preprocess import (jitter_score, resample_clip, smooth_clip, split_dataset,
                         train_norm_stats)
from .sampler import generate_many
from .synthetic import make_synthetic_dataset
from .textenc import make_text_encoder
from .vq_training import load_expert, train_vqvae

EXIT_BAD_CONTAINER = 2
EXIT_MISSING_DEPENDENCY = 3
EXIT_EMPTY_TEXT = 4
EXIT_MISSING_SPLIT = 5


class MissingDependencyError(TextMotionError):
    pass


class EmptyTextError(TextMotionError):
    pass


class MissingSplitError(TextMotionError):
    pass


def _log(msg: str):
    print(msg, file=sys.stderr)


def _emit(payload: dict):
    print(json.dumps(payload, sort_keys=True))


def _set_threads(threads: int | None):
    if threads is not None:
        import torch

        torch.set_num_threads(max(1, threads))


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config, args.set or [])
    if args.workdir:
        cfg.workdir = args.workdir
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    _set_threads(cfg.threads)
    return cfg


def _write_resolved(cfg: ExperimentConfig, out_dir: Path, seed: int) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "resolved_config.json"
    tree = cfg.to_dict()
    tree["resolved_seed"] = seed
    atomic_write_json(path, tree)
    return path


def _dataset_dir(cfg: ExperimentConfig, args) -> Path:
    return Path(args.data) if getattr(args, "data", None) else Path(cfg.workdir) / "data"


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingDependencyError(f"missing {what}: {path}")
    return path


# ---------------------------------------------------------------- prep

def _raw_manifest_digest(raw: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(raw.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(raw)).encode())
            h.update(bytes.fromhex(file_sha256(p)))
    return h.hexdigest()


def _prep_digest(cfg: ExperimentConfig, seed: int, raw: Path | None) -> str:
    payload = {
        "data": cfg.to_dict()["data"], "prep": cfg.prep.to_dict(), "seed": seed,
        "raw": _raw_manifest_digest(raw) if raw else None,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _process_clip(clip, prep: PrepConfig):
    out = clip
    if out.fps != prep.target_fps:
        out = resample_clip(out, prep.target_fps)
    if prep.smooth:
        out = smooth_clip(out, cutoff_hz=prep.smooth_cutoff)
    return out


def cmd_prep(args) -> int:
    cfg = _load_cfg(args)
    prep = cfg.prep
    if args.target_fps is not None:
        prep = dataclasses.replace(prep, target_fps=args.target_fps)
    if args.smooth_cutoff is not None:
        prep = dataclasses.replace(prep, smooth_cutoff=args.smooth_cutoff, smooth=True)
    if args.smooth:
        prep = dataclasses.replace(prep, smooth=True)
    cfg.prep = prep
    seed = resolve_seed(args.seed, cfg.data.seed)
    if seed != cfg.data.seed:
        cfg.data = dataclasses.replace(cfg.data, seed=seed)
    out_dir = Path(args.out) if args.out else _dataset_dir(cfg, args)
    raw = Path(args.raw) if args.raw else None

    digest = _prep_digest(cfg, seed, raw)
    hash_file = out_dir / ".prep_hash"
    report_path = out_dir / "jitter_report.json" if args.report else None
    if hash_file.exists() and hash_file.read_text().strip() == digest \
            and (out_dir / "corpus.jsonl").exists():
        _log(f"prep up to date, skipping ({out_dir})")
        _emit({"dataset": str(out_dir),
               "report": str(report_path) if report_path and report_path.exists() else None,
               "config": str(out_dir / "resolved_config.json")})
        return 0

    if raw is not None:
        _log(f"loading raw corpus from {raw}")
        dataset = containers.load_dataset(raw)
    else:
        _log(f"synthesizing corpus: {cfg.data.n_clips} clips, seed {cfg.data.seed}")
        dataset = make_synthetic_dataset(cfg.data)

    before = {m: [] for m in ("body", "hand", "face")}
    for clip in dataset.clips:
        for m in before:
            track = clip.track(m)
            if track is not None and track.shape[0] >= 8:
                before[m].append(jitter_score(track, fps=clip.fps))

    workers = cfg.threads or 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            processed = list(pool.map(lambda c: _process_clip(c, prep), dataset.clips))
    else:
        processed = [_process_clip(c, prep) for c in dataset.clips]
    splits = dataset.splits or split_dataset(processed, seed=seed)
    dataset = MotionDataset(clips=processed, splits=splits, fps=prep.target_fps)
    stats = train_norm_stats(dataset)
    containers.save_dataset(dataset, out_dir, stats=stats)
    resolved = _write_resolved(cfg, out_dir, seed)

    report_file = None
    if args.report:
        after = {m: [] for m in before}
        for clip in processed:
            for m in after:
                track = clip.track(m)
                if track is not None and track.shape[0] >= 8:
                    after[m].append(jitter_score(track, fps=clip.fps))
        report = {m: {"before": float(np.mean(before[m])) if before[m] else None,
                      "after": float(np.mean(after[m])) if after[m] else None,
                      "n": len(before[m])} for m in before}
        report_file = out_dir / "jitter_report.json"
        atomic_write_json(report_file, report)
    atomic_write_text(hash_file, digest + "\n")
    _emit({"dataset": str(out_dir),
           "report": str(report_file) if report_file else None,
           "config": str(resolved)})
    return 0


# --------------------------------------------------------------- train

def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    data_dir = _require(_dataset_dir(cfg, args), "dataset (run `textmotion prep` first)")
    dataset = containers.load_dataset(data_dir)
    stats = containers.load_norm_stats(data_dir) or train_norm_stats(dataset)
    outputs = {}
    if args.stage == "vq":
        mods = ("body", "hand", "face") if args.modality == "all" else (args.modality,)
        for mod in mods:
            block = cfg.experts[mod]
            seed = resolve_seed(args.seed, block.train.seed)
            tc = dataclasses.replace(block.train, seed=seed)
            out_dir = Path(args.out) / mod if args.out and len(mods) > 1 else \
                Path(args.out) if args.out else Path(cfg.workdir) / "experts" / mod
            _log(f"training {mod} expert for {tc.steps} steps (seed {seed})")
            train_vqvae(dataset, block.vq, tc, stats=stats, out_dir=out_dir,
                        resume=args.resume)
            _write_resolved(cfg, out_dir, seed)
            outputs[mod] = str(out_dir)
        _emit({"stage": "vq", "checkpoints": outputs,
               "loss_curves": {m: str(Path(p) / "loss_curve.csv") for m, p in outputs.items()}})
        return 0

    expert_root = Path(args.experts) if args.experts else Path(cfg.workdir) / "experts"
    experts, expert_dirs = {}, {}
    for mod in ("body", "hand", "face"):
        d = expert_root / mod
        _require(d / "config.json", f"{mod} expert checkpoint")
        experts[mod] = load_expert(d)
        expert_dirs[mod] = d
    seed = resolve_seed(args.seed, cfg.gpt.train.seed)
    tc = dataclasses.replace(cfg.gpt.train, seed=seed)
    if args.no_consistency:
        tc = dataclasses.replace(tc, use_consistency=False)
    out_dir = Path(args.out) if args.out else Path(cfg.workdir) / "gpt"
    _log(f"training sequence model for {tc.steps} steps (seed {seed}, "
         f"consistency {'on' if tc.use_consistency else 'off'})")
    train_gpt(dataset, experts, cfg.gpt.arch, tc, stats=stats, out_dir=out_dir,
              resume=args.resume, expert_dirs=expert_dirs)
    _write_resolved(cfg, out_dir, seed)
    _emit({"stage": "gpt", "checkpoint": str(out_dir),
           "loss_curve": str(out_dir / "loss_curve.csv")})
    return 0


# ------------------------------------------------------------ generate

def _load_bundle(cfg: ExperimentConfig, args):
    root = Path(args.checkpoint) if getattr(args, "checkpoint", None) else Path(cfg.workdir)
    gpt_dir = root / "gpt" if (root / "gpt").exists() else root
    _require(gpt_dir / "config.json", "sequence-model checkpoint")
    model, payload = load_gpt(gpt_dir)
    experts = {}
    for mod in ("body", "hand", "face"):
        info = payload.get("experts", {}).get(mod)
        d = Path(info["path"]) if info else root / "experts" / mod
        _require(d / "config.json", f"{mod} expert checkpoint")
        experts[mod] = load_expert(d)
    enc_spec = payload.get("text_encoder", {"name": "hashed_bow", "width": 512})
    encoder = make_text_encoder(enc_spec["name"], enc_spec["width"])
    return model, experts, encoder


def cmd_generate(args) -> int:
    cfg = _load_cfg(args)
    if not args.text or not args.text.strip():
        raise EmptyTextError("--text is empty; nothing to generate")
    model, experts, encoder = _load_bundle(cfg, args)
    seed = resolve_seed(args.seed, cfg.seed)
    sampling = cfg.sampling.to_sampling_config(seed)
    if args.max_tokens is not None:
        sampling.max_tokens = args.max_tokens
    if args.mode is not None:
        sampling.mode = args.mode
    motion = generate_many(model, experts, encoder, [args.text], sampling,
                           fps=cfg.data.fps)[0]
    tag = hashlib.sha256(f"{args.text}|{seed}".encode()).hexdigest()[:10]
    clip_id = f"gen_{tag}"
    out_dir = Path(args.out) if args.out else Path(cfg.workdir) / "generated"
    containers.save_clip(motion.to_clip(clip_id), out_dir)
    audit_path = out_dir / f"{clip_id}.audit.json"
    atomic_write_json(audit_path, {
        "text": args.text, "seed": seed, "mode": sampling.mode,
        "n_tokens": int(motion.tokens["body"].shape[0]),
        "n_frames": motion.n_frames, "truncated": motion.truncated,
        "end_replacements": [e.to_dict() for e in motion.audit],
    })
    positions_path = None
    if args.export_positions:
        from .kinematics import compose_visual_pose
        from .skeleton import BODY_JOINT_NAMES, default_skeleton

        vis = compose_visual_pose(motion.body, default_skeleton())
        positions_path = Path(args.export_positions)
        atomic_write_json(positions_path, {
            "fps": cfg.data.fps,
            "joint_names": list(BODY_JOINT_NAMES),
            "positions": np.round(vis.positions, 6).tolist(),
        })
    _log(f"generated {motion.n_frames} frames "
         f"({len(motion.audit)} premature-end replacements)")
    _emit({"clip": str(out_dir / f"{clip_id}.json"),
           "audit": str(audit_path),
           "positions": str(positions_path) if positions_path else None})
    return 0


# ---------------------------------------------------------------- eval

def _eval_extractors(cfg: ExperimentConfig, data_dir: Path, dataset, stats, seed: int):
    """Train (or reuse) the frozen metric feature space."""
    import torch

    from .evalsuite import train_eval_extractors
    from .evalsuite.extractors import EvalExtractorConfig, EvalFeatureExtractors

    ex_cfg = dataclasses.replace(cfg.eval.extractor, seed=seed)
    cache_dir = Path(cfg.workdir) / "eval" / "extractors"
    key_payload = {"cfg": ex_cfg.to_dict()}
    prep_hash = data_dir / ".prep_hash"
    if prep_hash.exists():
        key_payload["data"] = prep_hash.read_text().strip()
    key = hashlib.sha256(json.dumps(key_payload, sort_keys=True).encode()).hexdigest()
    cache_file = cache_dir / "extractors.pt"
    meta_file = cache_dir / "meta.json"
    if cache_file.exists() and meta_file.exists():
        meta = json.loads(meta_file.read_text())
        if meta.get("key") == key:
            _log("reusing cached eval extractors")
            model = EvalFeatureExtractors(EvalExtractorConfig.from_dict(meta["cfg"]), stats)
            model.load_state_dict(torch.load(cache_file, weights_only=True))
            model.freeze()
            return model
    _log("training eval extractors")
    model = train_eval_extractors(dataset, ex_cfg, stats)
    cache_dir.mkdir(parents=True, exist_ok=True)
    from .ckpt import save_torch_atomic

    save_torch_atomic(model.state_dict(), cache_file)
    atomic_write_json(meta_file, {"key": key, "cfg": ex_cfg.to_dict(),
                                  "fingerprint": model.fingerprint})
    return model


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    from .evalsuite import modality_matching_eval, text_to_motion_eval

    data_dir = _require(_dataset_dir(cfg, args), "dataset")
    dataset = containers.load_dataset(data_dir)
    stats = containers.load_norm_stats(data_dir) or train_norm_stats(dataset)
    split = args.split or cfg.eval.split
    ids = dataset.splits.get(split)
    if not ids:
        raise MissingSplitError(f"split {split!r} is missing or empty in {data_dir}")
    clips = [dataset.get(i) for i in ids]
    model, experts, encoder = _load_bundle(cfg, args)
    seed = resolve_seed(args.seed, cfg.seed)
    extractors = _eval_extractors(cfg, data_dir, dataset, stats, cfg.eval.extractor.seed)

    repeats = args.repeats or cfg.eval.repeats_per_text
    texts = [c.texts[0] for c in clips]
    _log(f"generating {len(texts)}x{repeats} motions from split {split!r}")
    generated = []
    for rep in range(repeats):
        sampling = cfg.sampling.to_sampling_config(seed + 1000 * rep)
        if cfg.sampling.mode == "greedy" and repeats > 1 and rep > 0:
            sampling.mode = "sample"  # greedy repeats would be identical
        generated.extend(generate_many(model, experts, encoder, texts, sampling,
                                       fps=cfg.data.fps, skip_empty=True))
    dropped = len(texts) * repeats - len(generated)
    if dropped:
        _log(f"dropped {dropped} too-short generations")
    out_dir = Path(args.out) if args.out else Path(cfg.workdir) / "eval" / args.suite
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.suite == "t2m":
        report = text_to_motion_eval(
            generated, clips, extractors, seed=seed,
            pool_size=cfg.eval.pool_size, repetitions=cfg.eval.repetitions,
            diversity_pairs=cfg.eval.diversity_pairs, mmod_pairs=cfg.eval.mmod_pairs)
    else:
        report = modality_matching_eval(
            generated, extractors, clips, seed=seed,
            pool_size=cfg.eval.pool_size, repetitions=cfg.eval.repetitions)
    json_path = out_dir / "report.json"
    csv_path = out_dir / "report.csv"
    atomic_write_text(json_path, report.to_json() + "\n")
    atomic_write_text(csv_path, report.to_csv())
    _write_resolved(cfg, out_dir, seed)
    _emit({"suite": args.suite, "report_json": str(json_path),
           "report_csv": str(csv_path)})
    return 0


# ---------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="textmotion",
                                description="Two-stage expressive text-to-motion pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="experiment config JSON")
        sp.add_argument("--set", action="append", metavar="PATH=VALUE",
                        help="dotted-path config override (repeatable)")
        sp.add_argument("--workdir", help="run directory (overrides config)")
        sp.add_argument("--seed", type=int, default=None,
                        help="seed override (falls back to $T2MX_SEED, then config)")
        sp.add_argument("--threads", type=int, default=None,
                        help="cap torch/preprocessing threads")

    sp = sub.add_parser("prep", help="build or preprocess the motion corpus")
    common(sp)
    sp.add_argument("--raw", help="raw corpus directory (default: synthesize)")
    sp.add_argument("--out", help="output dataset directory")
    sp.add_argument("--target-fps", type=float, default=None)
    sp.add_argument("--smooth-cutoff", type=float, default=None,
                    help="low-pass cutoff in Hz; implies smoothing")
    sp.add_argument("--smooth", action="store_true", help="low-pass filter all tracks")
    sp.add_argument("--report", action="store_true", help="write a jitter report")
    sp.set_defaults(func=cmd_prep)

    sp = sub.add_parser("train", help="train experts or the sequence model")
    common(sp)
    sp.add_argument("--stage", choices=("vq", "gpt"), required=True)
    sp.add_argument("--modality", choices=("body", "hand", "face", "all"), default="all")
    sp.add_argument("--data", help="dataset directory")
    sp.add_argument("--experts", help="expert checkpoint root (gpt stage)")
    sp.add_argument("--out", help="checkpoint output directory")
    sp.add_argument("--resume", action="store_true")
    sp.add_argument("--no-consistency", action="store_true",
                    help="disable the cross-stream alignment loss (gpt stage)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("generate", help="decode motion from a text prompt")
    common(sp)
    sp.add_argument("--text", required=True)
    sp.add_argument("--checkpoint", help="run directory with gpt/ and experts/")
    sp.add_argument("--out", help="output directory for the clip container")
    sp.add_argument("--max-tokens", type=int, default=None)
    sp.add_argument("--mode", choices=("greedy", "sample"), default=None)
    sp.add_argument("--export-positions", help="also write world joint positions JSON")
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("eval", help="run a metric suite")
    common(sp)
    sp.add_argument("--suite", choices=("t2m", "matching"), required=True)
    sp.add_argument("--checkpoint", help="run directory with gpt/ and experts/")
    sp.add_argument("--data", help="dataset directory")
    sp.add_argument("--split", default=None)
    sp.add_argument("--repeats", type=int, default=None,
                    help="generations per text")
    sp.add_argument("--out", help="report output directory")
    sp.set_defaults(func=cmd_eval)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ContainerError as e:
        _log(f"error: {e}")
        return EXIT_BAD_CONTAINER
    except MissingDependencyError as e:
        _log(f"error: {e}")
        return EXIT_MISSING_DEPENDENCY
    except EmptyTextError as e:
        _log(f"error: {e}")
        return EXIT_EMPTY_TEXT
    except MissingSplitError as e:
        _log(f"error: {e}")
        return EXIT_MISSING_SPLIT
    except EmptyMotionError as e:
        _log(f"error: {e}")
        return 1
    except (ConfigError, NoDataError) as e:
        _log(f"error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
