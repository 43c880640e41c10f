"""On-disk formats: clip features, annotations, and checkpoints.

All binary formats are little-endian regardless of host. Feature payloads
are 32-bit floats on disk (matching common extractor output) widened to
64-bit in memory; checkpoint tensors are stored at full 64-bit precision
so load(save(params)) is bit-exact. Writers go through a temp file plus
rename; readers are reentrant.

Feature file layout:  "ADNF" | u32 version=1 | u32 num_clips | u32 dim |
num_clips*dim little-endian f32, clip-major.

Checkpoint layout:  "ADNC" | u32 version=1 | u32 header_len | header JSON
(configs, seed, epoch counters, tensor names and shapes in order) |
concatenated f64 tensor payloads in header order.
"""

from __future__ import annotations

import dataclasses
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import model as architecture
from . import training
from .errors import CheckpointError, ConfigError, FormatError, InputError
from .evaluation import TemporalSegment
from .model import ADNetConfig, ModelParams
from .numerics import AdamState, Tensor
from .training import TrainConfig

FEATURE_MAGIC = b"ADNF"
FEATURE_VERSION = 1
CHECKPOINT_MAGIC = b"ADNC"
CHECKPOINT_VERSION = 1

MANIFEST_KEYS = {"video_id", "frames_per_clip", "total_frames", "segments"}
SEGMENT_KEYS = {"start_frame", "end_frame", "label"}


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename."""
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or Path("."), prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, target)
    except BaseException:
        os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


@dataclass(frozen=True)
class ClipFeatureSequence:
    """Per-video matrix of clip feature vectors, shaped (dim, num_clips)."""

    video_id: str
    features: np.ndarray

    @property
    def dim(self) -> int:
        return self.features.shape[0]

    @property
    def num_clips(self) -> int:
        return self.features.shape[1]


def write_features(seq: ClipFeatureSequence, path) -> None:
    feats = np.asarray(seq.features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
        raise InputError(f"features must be a non-empty (dim, num_clips) matrix, "
                         f"got shape {feats.shape}")
    dim, num_clips = feats.shape
    header = FEATURE_MAGIC + struct.pack("<III", FEATURE_VERSION, num_clips, dim)
    payload = np.ascontiguousarray(feats.T, dtype="<f4").tobytes()
    atomic_write_bytes(path, header + payload)


def read_features(path, expect_dim: int | None = None,
                  video_id: str | None = None) -> ClipFeatureSequence:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(path, f"cannot read feature file: {exc}") from exc
    if len(data) < 16:
        raise FormatError(path, f"truncated header: {len(data)} bytes, need 16",
                          offset=len(data))
    if data[:4] != FEATURE_MAGIC:
        raise FormatError(path, f"bad magic {data[:4]!r}, expected {FEATURE_MAGIC!r}",
                          offset=0)
    version, num_clips, dim = struct.unpack_from("<III", data, 4)
    if version != FEATURE_VERSION:
        raise FormatError(path, f"unsupported version {version}", offset=4)
    if num_clips == 0 or dim == 0:
        raise FormatError(path, "empty feature sequences are not allowed", offset=8)
    if expect_dim is not None and dim != expect_dim:
        raise FormatError(path, f"feature dim is {dim}, expected {expect_dim}", offset=12)
    expected = 16 + 4 * num_clips * dim
    if len(data) != expected:
        raise FormatError(
            path,
            f"payload is {len(data) - 16} bytes, expected {expected - 16} "
            f"({num_clips} clips x {dim} dims x 4 bytes)",
            offset=16)
    raw = np.frombuffer(data, dtype="<f4", offset=16)
    bad = np.flatnonzero(~np.isfinite(raw))
    if bad.size:
        raise FormatError(path, "non-finite feature value", offset=16 + 4 * int(bad[0]))
    features = raw.reshape(num_clips, dim).T.astype(np.float64)
    return ClipFeatureSequence(video_id=video_id or Path(path).stem, features=features)


@dataclass(frozen=True)
class AnnotationManifest:
    """Frame-level segment annotation for one video."""

    video_id: str
    frames_per_clip: int
    total_frames: int
    segments: tuple[TemporalSegment, ...]


def frame_labels(manifest: AnnotationManifest) -> np.ndarray:
    labels = np.zeros(manifest.total_frames, dtype=np.int64)
    for seg in manifest.segments:
        labels[seg.start_frame:seg.end_frame] = seg.label
    return labels


def write_annotations(manifest: AnnotationManifest, path) -> None:
    doc = {
        "video_id": manifest.video_id,
        "frames_per_clip": manifest.frames_per_clip,
        "total_frames": manifest.total_frames,
        "segments": [
            {"start_frame": s.start_frame, "end_frame": s.end_frame, "label": s.label}
            for s in manifest.segments
        ],
    }
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def read_annotations(path, clip_label_fraction: float = 0.5
                     ) -> tuple[AnnotationManifest, np.ndarray]:
    """Parse a manifest and derive its per-clip label timeline."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(path, f"cannot read annotation file: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(path, f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError(path, "annotation document must be a JSON object")
    unknown = sorted(set(doc) - MANIFEST_KEYS)
    if unknown:
        raise FormatError(path, f"unknown field {unknown[0]!r}")
    missing = sorted(MANIFEST_KEYS - {"frames_per_clip"} - set(doc))
    if missing:
        raise FormatError(path, f"missing field {missing[0]!r}")
    video_id = doc["video_id"]
    frames_per_clip = doc.get("frames_per_clip", 16)
    total_frames = doc["total_frames"]
    if not isinstance(frames_per_clip, int) or frames_per_clip < 1:
        raise FormatError(path, f"field 'frames_per_clip' must be a positive integer, "
                                f"got {frames_per_clip!r}")
    if not isinstance(total_frames, int) or total_frames < 1:
        raise FormatError(path, f"field 'total_frames' must be a positive integer, "
                                f"got {total_frames!r}")
    raw_segments = doc["segments"]
    if not isinstance(raw_segments, list) or not raw_segments:
        raise FormatError(path, "field 'segments' must be a non-empty list")
    segments = []
    for index, entry in enumerate(raw_segments):
        if not isinstance(entry, dict):
            raise FormatError(path, f"segment {index} must be an object")
        unknown = sorted(set(entry) - SEGMENT_KEYS)
        if unknown:
            raise FormatError(path, f"segment {index}: unknown field {unknown[0]!r}")
        missing = sorted(SEGMENT_KEYS - set(entry))
        if missing:
            raise FormatError(path, f"segment {index}: missing field {missing[0]!r}")
        try:
            segments.append(TemporalSegment(entry["start_frame"], entry["end_frame"],
                                            entry["label"]))
        except InputError as exc:
            raise FormatError(path, f"segment {index}: {exc}") from exc
    segments.sort(key=lambda s: s.start_frame)
    problems = []
    if segments[0].start_frame != 0:
        problems.append(f"first segment starts at {segments[0].start_frame}, not 0")
    for prev, cur in zip(segments, segments[1:]):
        if cur.start_frame != prev.end_frame:
            kind = "overlap" if cur.start_frame < prev.end_frame else "gap"
            problems.append(
                f"{kind} between [{prev.start_frame}, {prev.end_frame}) and "
                f"[{cur.start_frame}, {cur.end_frame})")
    if segments[-1].end_frame != total_frames:
        problems.append(
            f"last segment ends at {segments[-1].end_frame}, total_frames is {total_frames}")
    if problems:
        raise FormatError(path, "segments do not partition the video: " + "; ".join(problems))
    manifest = AnnotationManifest(video_id=video_id, frames_per_clip=frames_per_clip,
                                  total_frames=total_frames, segments=tuple(segments))
    clip_labels = training.clip_labels_from_frames(frame_labels(manifest), frames_per_clip,
                                                   clip_label_fraction)
    return manifest, clip_labels


def model_config_to_dict(config: ADNetConfig) -> dict:
    return {
        "window_width": config.window_width,
        "num_stages": config.num_stages,
        "num_layers": config.num_layers,
        "input_dim": config.input_dim,
        "kernel_size": config.kernel_size,
        "hidden_channels": config.hidden_channels,
        "threshold": config.threshold,
    }


def model_config_from_dict(doc: dict) -> ADNetConfig:
    return ADNetConfig(**doc)


def train_config_to_dict(config: TrainConfig) -> dict:
    doc = dataclasses.asdict(config)
    doc["lambda"] = doc.pop("lambda_")
    return doc


def train_config_from_dict(doc: dict) -> TrainConfig:
    doc = dict(doc)
    if "lambda" in doc:
        doc["lambda_"] = doc.pop("lambda")
    return TrainConfig(**doc)


@dataclass
class Checkpoint:
    """Everything needed to resume training or run inference."""

    model_config: ADNetConfig
    train_config: TrainConfig
    seed: int
    frames_per_clip: int
    epochs_completed: int
    params: ModelParams
    adam: AdamState | None = None


def _checkpoint_blobs(ckpt: Checkpoint) -> list[tuple[str, np.ndarray]]:
    blobs = [(name, tensor.value) for name, tensor in ckpt.params.tensors.items()]
    if ckpt.adam is not None:
        names = list(ckpt.params.tensors)
        for prefix, buffers in (("optimizer.m.", ckpt.adam.first_moment),
                                ("optimizer.v.", ckpt.adam.second_moment)):
            blobs.extend((prefix + name, buf) for name, buf in zip(names, buffers))
    return blobs


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    blobs = _checkpoint_blobs(ckpt)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "model": model_config_to_dict(ckpt.model_config),
        "train": train_config_to_dict(ckpt.train_config),
        "seed": ckpt.seed,
        "frames_per_clip": ckpt.frames_per_clip,
        "epochs_completed": ckpt.epochs_completed,
        "adam": None if ckpt.adam is None else {
            "lr": ckpt.adam.lr,
            "beta1": ckpt.adam.beta1,
            "beta2": ckpt.adam.beta2,
            "epsilon": ckpt.adam.epsilon,
            "step_count": ckpt.adam.step_count,
        },
        "tensors": [{"name": name, "shape": list(arr.shape)} for name, arr in blobs],
    }
    header_bytes = json.dumps(header).encode("utf-8")
    out = bytearray()
    out += CHECKPOINT_MAGIC
    out += struct.pack("<II", CHECKPOINT_VERSION, len(header_bytes))
    out += header_bytes
    for _, arr in blobs:
        out += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    atomic_write_bytes(path, bytes(out))


def _expected_tensor_shapes(model_config: ADNetConfig, with_adam: bool) -> dict[str, tuple]:
    shapes = dict(architecture.parameter_shapes(model_config))
    if with_adam:
        for prefix in ("optimizer.m.", "optimizer.v."):
            for name, shape in architecture.parameter_shapes(model_config).items():
                shapes[prefix + name] = shape
    return shapes


def load_checkpoint(path, expect_model_config: ADNetConfig | None = None) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(path, f"cannot read checkpoint: {exc}") from exc
    if len(data) < 12:
        raise FormatError(path, f"truncated header: {len(data)} bytes, need 12",
                          offset=len(data))
    if data[:4] != CHECKPOINT_MAGIC:
        raise FormatError(path, f"bad magic {data[:4]!r}, expected {CHECKPOINT_MAGIC!r}",
                          offset=0)
    version, header_len = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(path, f"unsupported version {version}", offset=4)
    if len(data) < 12 + header_len:
        raise FormatError(path, "truncated header JSON", offset=len(data))
    try:
        header = json.loads(data[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(path, f"invalid header JSON: {exc}", offset=12) from exc
    try:
        model_config = model_config_from_dict(header["model"])
        train_config = train_config_from_dict(header["train"])
        stored = {entry["name"]: tuple(entry["shape"]) for entry in header["tensors"]}
    except (KeyError, TypeError, ConfigError) as exc:
        raise FormatError(path, f"malformed header: {exc}", offset=12) from exc
    has_adam = header.get("adam") is not None
    expected = _expected_tensor_shapes(model_config, has_adam)
    missing = sorted(set(expected) - set(stored))
    if missing:
        raise CheckpointError(f"{path}: missing tensor {missing[0]!r}")
    extra = sorted(set(stored) - set(expected))
    if extra:
        raise CheckpointError(f"{path}: unexpected tensor {extra[0]!r}")
    for name, shape in expected.items():
        if stored[name] != shape:
            raise CheckpointError(
                f"{path}: tensor {name!r} has shape {stored[name]}, expected {shape}")
    if expect_model_config is not None and model_config != expect_model_config:
        raise CheckpointError(
            f"{path}: checkpoint model config {model_config_to_dict(model_config)} is "
            f"incompatible with requested {model_config_to_dict(expect_model_config)}")
    offset = 12 + header_len
    arrays: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        name = entry["name"]
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = 8 * count
        if offset + nbytes > len(data):
            raise FormatError(path, f"truncated payload for tensor {name!r}", offset=offset)
        arrays[name] = np.frombuffer(data, dtype="<f8", count=count,
                                     offset=offset).reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(data):
        raise FormatError(path, f"{len(data) - offset} trailing bytes after last tensor",
                          offset=offset)
    params = ModelParams(model_config, {
        name: Tensor(arrays[name]) for name in architecture.parameter_shapes(model_config)})
    adam = None
    if has_adam:
        meta = header["adam"]
        names = list(architecture.parameter_shapes(model_config))
        adam = AdamState(
            lr=meta["lr"], beta1=meta["beta1"], beta2=meta["beta2"],
            epsilon=meta["epsilon"], step_count=meta["step_count"],
            first_moment=[np.array(arrays["optimizer.m." + n]) for n in names],
            second_moment=[np.array(arrays["optimizer.v." + n]) for n in names],
        )
    return Checkpoint(
        model_config=model_config, train_config=train_config, seed=header["seed"],
        frames_per_clip=header["frames_per_clip"],
        epochs_completed=header["epochs_completed"], params=params, adam=adam)
