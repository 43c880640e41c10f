"""Command-line entry point: synth, train, infer, and eval subcommands.

Values resolve with precedence flag > config file > default. Every output
document embeds the tool version and the resolved configuration. Exit
codes: 0 success, 1 usage, 2 data or format error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import evaluation
from . import io as storage
from . import model as architecture
from . import synth as generator
from . import training
from .errors import (AdnetError, CheckpointError, ConfigError, FormatError, InputError,
                     MetricError, NumericError, UsageError)
from .model import ADNetConfig
from .training import TrainConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

MODEL_KEYS = ("window_width", "num_stages", "num_layers", "kernel_size",
              "hidden_channels", "input_dim", "threshold")
TRAIN_KEYS = ("learning_rate", "lambda", "alpha", "epochs", "seed", "use_ad_loss",
              "clip_label_fraction")
SYNTH_KEYS = ("num_videos", "clips_min", "clips_max", "abnormal_segment_count_range",
              "input_dim", "class_mean_separation", "noise_std", "frames_per_clip", "seed")
PATH_KEYS = ("features_dir", "annotations_dir", "checkpoint", "out_dir")
SECTIONS = {"model": MODEL_KEYS, "train": TRAIN_KEYS, "synth": SYNTH_KEYS,
            "paths": PATH_KEYS}


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def load_run_config(path) -> dict:
    """Parse and validate a run-config document; unknown keys are rejected."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(path, f"cannot read config: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(path, f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    for section, content in doc.items():
        if section not in SECTIONS:
            raise ConfigError(f"{path}: unknown config section {section!r}")
        if not isinstance(content, dict):
            raise ConfigError(f"{path}: section {section!r} must be an object")
        for key in content:
            if key not in SECTIONS[section]:
                raise ConfigError(f"{path}: unknown config key {section}.{key!r}")
    return doc


def _model_config(doc: dict, input_dim: int) -> ADNetConfig:
    section = dict(doc.get("model", {}))
    configured_dim = section.pop("input_dim", None)
    if configured_dim is not None and configured_dim != input_dim:
        raise InputError(
            f"config says input_dim={configured_dim} but feature files carry {input_dim}")
    defaults = {"window_width": 64, "num_stages": 5, "num_layers": 6}
    return ADNetConfig(input_dim=input_dim, **{**defaults, **section})


def _train_config(doc: dict) -> TrainConfig:
    return storage.train_config_from_dict(doc.get("train", {}))


def _synth_config(doc: dict) -> generator.SynthConfig:
    section = dict(doc.get("synth", {}))
    if "abnormal_segment_count_range" in section:
        section["abnormal_segment_count_range"] = tuple(
            section["abnormal_segment_count_range"])
    return generator.SynthConfig(**section)


def _resolve_path(doc: dict, key: str, flag_value, required: bool = True):
    value = flag_value if flag_value is not None else doc.get("paths", {}).get(key)
    if value is None and required:
        raise ConfigError(f"no {key!r} given (flag or config paths.{key})")
    return None if value is None else Path(value)


def _document_header(config: dict) -> dict:
    return {"tool": "adnet", "version": __version__, "config": config}


def _write_json(path, doc: dict) -> None:
    storage.atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def cmd_synth(args) -> int:
    doc = load_run_config(args.config)
    config = _synth_config(doc)
    out_dir = Path(args.out)
    features_dir = out_dir / "features"
    annotations_dir = out_dir / "annotations"
    features_dir.mkdir(parents=True, exist_ok=True)
    annotations_dir.mkdir(parents=True, exist_ok=True)
    videos = generator.generate(config)
    for video in videos:
        storage.write_features(video.features, features_dir / f"{video.features.video_id}.adnf")
        storage.write_annotations(video.manifest,
                                  annotations_dir / f"{video.manifest.video_id}.json")
    summary = _document_header({"synth": _synth_dict(config), "out": str(out_dir)})
    summary["videos"] = [v.features.video_id for v in videos]
    _write_json(out_dir / "corpus.json", summary)
    print(f"wrote {len(videos)} videos to {out_dir}")
    return EXIT_OK


def _synth_dict(config: generator.SynthConfig) -> dict:
    return {
        "num_videos": config.num_videos,
        "clips_min": config.clips_min,
        "clips_max": config.clips_max,
        "abnormal_segment_count_range": list(config.abnormal_segment_count_range),
        "input_dim": config.input_dim,
        "class_mean_separation": config.class_mean_separation,
        "noise_std": config.noise_std,
        "frames_per_clip": config.frames_per_clip,
        "seed": config.seed,
    }


def _load_corpus(features_dir: Path, annotations_dir: Path, fraction: float):
    """Matching feature/annotation pairs; returns (ids, sequences, manifests,
    clip label arrays, frames_per_clip)."""
    feature_files = sorted(features_dir.glob("*.adnf"))
    if not feature_files:
        raise InputError(f"no .adnf feature files in {features_dir}")
    feature_ids = [p.stem for p in feature_files]
    annotation_ids = {p.stem for p in annotations_dir.glob("*.json")}
    unmatched = sorted(set(feature_ids) ^ annotation_ids)
    if unmatched:
        raise InputError(
            f"feature/annotation mismatch for video ids: {unmatched} "
            f"(features in {features_dir}, annotations in {annotations_dir})")
    sequences = []
    manifests = []
    labels = []
    frames_per_clip = None
    for path in feature_files:
        seq = storage.read_features(path)
        manifest, clip_labels = storage.read_annotations(
            annotations_dir / f"{path.stem}.json", clip_label_fraction=fraction)
        if manifest.video_id != path.stem:
            raise InputError(
                f"{annotations_dir / (path.stem + '.json')}: manifest video_id "
                f"{manifest.video_id!r} does not match file name")
        if frames_per_clip is None:
            frames_per_clip = manifest.frames_per_clip
        elif manifest.frames_per_clip != frames_per_clip:
            raise InputError(
                f"inconsistent frames_per_clip: {manifest.frames_per_clip} in "
                f"{manifest.video_id}, {frames_per_clip} elsewhere")
        if clip_labels.shape[0] != seq.num_clips:
            raise InputError(
                f"{manifest.video_id}: {seq.num_clips} feature clips but annotations "
                f"imply {clip_labels.shape[0]} clips")
        sequences.append(seq)
        manifests.append(manifest)
        labels.append(clip_labels)
    return feature_ids, sequences, manifests, labels, frames_per_clip


def cmd_train(args) -> int:
    doc = load_run_config(args.config)
    train_config = _train_config(doc)
    features_dir = _resolve_path(doc, "features_dir", None)
    annotations_dir = _resolve_path(doc, "annotations_dir", None)
    checkpoint_path = _resolve_path(doc, "checkpoint", None)
    out_dir = _resolve_path(doc, "out_dir", None, required=False)
    ids, sequences, _, labels, frames_per_clip = _load_corpus(
        features_dir, annotations_dir, train_config.clip_label_fraction)
    input_dim = sequences[0].dim
    for seq in sequences:
        if seq.dim != input_dim:
            raise InputError(f"{seq.video_id}: feature dim {seq.dim}, others have {input_dim}")
    model_config = _model_config(doc, input_dim)
    dataset = [(seq.features, lab) for seq, lab in zip(sequences, labels)]
    resume = None
    if args.resume:
        previous = storage.load_checkpoint(checkpoint_path, expect_model_config=model_config)
        if previous.adam is None:
            raise CheckpointError(f"{checkpoint_path}: no optimizer state to resume from")
        resume = training.TrainResult(params=previous.params, adam=previous.adam,
                                      epochs_completed=previous.epochs_completed, log=[])
    result = training.train(dataset, model_config, train_config, resume=resume)
    ckpt = storage.Checkpoint(
        model_config=model_config, train_config=train_config, seed=train_config.seed,
        frames_per_clip=frames_per_clip, epochs_completed=result.epochs_completed,
        params=result.params, adam=result.adam)
    checkpoint_path.parent.mkdir(parents=True, exist_ok=True)
    storage.save_checkpoint(ckpt, checkpoint_path)
    lines = [json.dumps({"epoch": entry.epoch, "mean_mse": entry.mean_mse,
                         "mean_ad": entry.mean_ad, "mean_total": entry.mean_total})
             for entry in result.log]
    for line in lines:
        print(line)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path = out_dir / "train_log.jsonl"
        if args.resume and log_path.exists():
            existing = log_path.read_text(encoding="utf-8")
            storage.atomic_write_text(log_path, existing + "\n".join(lines) + "\n")
        else:
            storage.atomic_write_text(log_path, "\n".join(lines) + "\n")
    print(f"checkpoint written to {checkpoint_path} "
          f"({result.epochs_completed} epochs completed)")
    return EXIT_OK


def cmd_infer(args) -> int:
    ckpt = storage.load_checkpoint(args.checkpoint)
    threshold = args.threshold if args.threshold is not None else ckpt.model_config.threshold
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"threshold must lie in (0, 1), got {threshold}")
    features = Path(args.features)
    paths = [features] if features.is_file() else sorted(features.glob("*.adnf"))
    if not paths:
        raise InputError(f"no .adnf feature files in {features}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    # identify the checkpoint by content, not path, so identical runs in
    # different directories emit identical documents
    resolved = {
        "threshold": threshold,
        "model": storage.model_config_to_dict(ckpt.model_config),
        "train_seed": ckpt.seed,
        "epochs_completed": ckpt.epochs_completed,
        "frames_per_clip": ckpt.frames_per_clip,
    }
    for path in paths:
        seq = storage.read_features(path, expect_dim=ckpt.model_config.input_dim)
        scores = architecture.score_sequence(ckpt.params, seq.features)
        if not np.all(np.isfinite(scores)):
            raise NumericError(f"non-finite score for video {seq.video_id}")
        labels = architecture.predict_labels(scores, threshold)
        frame_scores = evaluation.expand_to_frames(
            scores, ckpt.frames_per_clip, ckpt.frames_per_clip * seq.num_clips)
        doc = _document_header(resolved)
        doc.update({
            "video_id": seq.video_id,
            "num_clips": seq.num_clips,
            "frames_per_clip": ckpt.frames_per_clip,
            "clip_scores": scores.tolist(),
            "clip_labels": labels.tolist(),
            "frame_scores": frame_scores.tolist(),
        })
        _write_json(out_dir / f"{seq.video_id}.json", doc)
    print(f"scored {len(paths)} videos into {out_dir}")
    return EXIT_OK


def _parse_ks(text: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(part) for part in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad k list {text!r}: {exc}")
    if not ks:
        raise argparse.ArgumentTypeError("k list is empty")
    return ks


def cmd_eval(args) -> int:
    pred_dir = Path(args.pred)
    gt_dir = Path(args.gt)
    pred_paths = sorted(pred_dir.glob("*.json"))
    if not pred_paths:
        raise InputError(f"no prediction documents in {pred_dir}")
    pred_scores: dict[str, np.ndarray] = {}
    frames_per_clip = None
    threshold = None
    for path in pred_paths:
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(path, f"invalid JSON: {exc}") from exc
        for key in ("video_id", "clip_scores", "frames_per_clip"):
            if key not in doc:
                raise FormatError(path, f"missing field {key!r}")
        video_id = doc["video_id"]
        pred_scores[video_id] = np.asarray(doc["clip_scores"], dtype=np.float64)
        if frames_per_clip is None:
            frames_per_clip = doc["frames_per_clip"]
        elif doc["frames_per_clip"] != frames_per_clip:
            raise InputError(f"{path}: frames_per_clip {doc['frames_per_clip']} "
                             f"disagrees with {frames_per_clip} elsewhere")
        doc_threshold = doc.get("config", {}).get("threshold", 0.5)
        if threshold is None:
            threshold = doc_threshold
        elif doc_threshold != threshold:
            raise InputError(f"{path}: threshold {doc_threshold} disagrees with "
                             f"{threshold} elsewhere")
    gt_labels: dict[str, np.ndarray] = {}
    for path in sorted(gt_dir.glob("*.json")):
        manifest, _ = storage.read_annotations(path)
        gt_labels[manifest.video_id] = storage.frame_labels(manifest)
        if manifest.frames_per_clip != frames_per_clip:
            raise InputError(
                f"{path}: frames_per_clip {manifest.frames_per_clip} does not match "
                f"predictions ({frames_per_clip})")
    report = evaluation.evaluate(pred_scores, gt_labels, frames_per_clip,
                                 ks=args.k, threshold=threshold)
    doc = _document_header({
        "pred": str(pred_dir), "gt": str(gt_dir), "ks": list(args.k),
        "threshold": threshold, "frames_per_clip": frames_per_clip,
    })
    doc.update(report.as_dict())
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adnet",
                     description="Temporal anomaly localization on clip features")
    parser.add_argument("--version", action="version", version=f"adnet {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    p_synth = commands.add_parser("synth", help="generate a synthetic corpus")
    p_synth.add_argument("--config", required=True, help="run-config JSON file")
    p_synth.add_argument("--out", required=True, help="output corpus directory")
    p_synth.set_defaults(handler=cmd_synth)

    p_train = commands.add_parser("train", help="train a model on a corpus")
    p_train.add_argument("--config", required=True, help="run-config JSON file")
    p_train.add_argument("--resume", action="store_true",
                         help="continue from the existing checkpoint")
    p_train.set_defaults(handler=cmd_train)

    p_infer = commands.add_parser("infer", help="score feature files")
    p_infer.add_argument("--checkpoint", required=True)
    p_infer.add_argument("--features", required=True,
                         help="feature file or directory of .adnf files")
    p_infer.add_argument("--out", required=True, help="output directory")
    p_infer.add_argument("--threshold", type=float, default=None,
                         help="override the checkpoint's label threshold")
    p_infer.set_defaults(handler=cmd_infer)

    p_eval = commands.add_parser("eval", help="evaluate predictions against ground truth")
    p_eval.add_argument("--pred", required=True, help="directory of infer documents")
    p_eval.add_argument("--gt", required=True, help="directory of annotation manifests")
    p_eval.add_argument("--k", type=_parse_ks, default=evaluation.DEFAULT_KS,
                        help="comma-separated IoU percentages (default 10,25,50)")
    p_eval.set_defaults(handler=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except NumericError as exc:
        print(f"adnet: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, InputError, FormatError, CheckpointError, MetricError,
            UsageError) as exc:
        print(f"adnet: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AdnetError as exc:  # internal errors: still report, same class of exit
        print(f"adnet: internal error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
