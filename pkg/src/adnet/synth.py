"""Deterministic synthetic corpus generator.

Clip features are Gaussian and class-conditional: normal clips center at
-separation/2 on every dimension, abnormal clips at +separation/2, with
isotropic noise. Abnormal stretches are contiguous clip runs placed
without touching each other; annotations are emitted in frame units at
clip-aligned boundaries, so every video's segments partition its frame
range exactly. The whole corpus is a pure function of the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .evaluation import TemporalSegment, segments_from_labels
from .io import AnnotationManifest, ClipFeatureSequence


@dataclass(frozen=True)
class SynthConfig:
    num_videos: int = 40
    clips_min: int = 48
    clips_max: int = 96
    abnormal_segment_count_range: tuple[int, int] = (1, 2)
    input_dim: int = 16
    class_mean_separation: float = 4.0
    noise_std: float = 1.0
    frames_per_clip: int = 16
    seed: int = 7

    def __post_init__(self):
        if self.num_videos < 1:
            raise ConfigError(f"num_videos must be >= 1, got {self.num_videos}")
        if self.clips_min < 4:
            raise ConfigError(f"clips_min must be >= 4, got {self.clips_min}")
        if self.clips_max < self.clips_min:
            raise ConfigError(
                f"clips_max ({self.clips_max}) must be >= clips_min ({self.clips_min})")
        low, high = self.abnormal_segment_count_range
        if low < 0 or high < low:
            raise ConfigError(
                f"abnormal_segment_count_range must be 0 <= low <= high, got ({low}, {high})")
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.class_mean_separation < 0:
            raise ConfigError(
                f"class_mean_separation must be >= 0, got {self.class_mean_separation}")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")
        if self.frames_per_clip < 1:
            raise ConfigError(f"frames_per_clip must be >= 1, got {self.frames_per_clip}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")


@dataclass(frozen=True)
class SynthVideo:
    features: ClipFeatureSequence
    manifest: AnnotationManifest
    clip_labels: np.ndarray


def _place_abnormal_runs(rng: np.random.Generator, num_clips: int, count: int) -> np.ndarray:
    """Clip labels with up to `count` non-touching abnormal runs."""
    labels = np.zeros(num_clips, dtype=np.int64)
    min_len = max(2, num_clips // 16)
    max_len = max(min_len, num_clips // 5)
    placed = 0
    attempts = 0
    while placed < count and attempts < 100:
        attempts += 1
        length = int(rng.integers(min_len, max_len + 1))
        start = int(rng.integers(0, num_clips - length + 1))
        lo = max(0, start - 1)
        hi = min(num_clips, start + length + 1)
        if labels[lo:hi].any():
            continue
        labels[start:start + length] = 1
        placed += 1
    return labels


def generate(config: SynthConfig) -> list[SynthVideo]:
    rng = np.random.default_rng(config.seed)
    half = config.class_mean_separation / 2.0
    videos = []
    low, high = config.abnormal_segment_count_range
    for index in range(config.num_videos):
        video_id = f"video_{index:03d}"
        num_clips = int(rng.integers(config.clips_min, config.clips_max + 1))
        count = int(rng.integers(low, high + 1))
        labels = _place_abnormal_runs(rng, num_clips, count)
        means = np.where(labels == 1, half, -half)
        noise = rng.normal(0.0, 1.0, size=(config.input_dim, num_clips))
        feats = means[None, :] + config.noise_std * noise
        n = config.frames_per_clip
        segments = tuple(
            TemporalSegment(seg.start_frame * n, seg.end_frame * n, seg.label)
            for seg in segments_from_labels(labels))
        manifest = AnnotationManifest(video_id=video_id, frames_per_clip=n,
                                      total_frames=num_clips * n, segments=segments)
        videos.append(SynthVideo(features=ClipFeatureSequence(video_id, feats),
                                 manifest=manifest, clip_labels=labels))
    return videos
