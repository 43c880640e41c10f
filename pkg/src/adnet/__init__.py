"""Temporal anomaly localization on precomputed video-clip features.

A multi-stage stack of masked dilated temporal convolutions scores every
clip of a video for abnormality. Variable-length videos are processed as
half-overlapping fixed-width windows whose scores are averaged back into
one timeline. Training minimizes a per-stage MSE plus a hard-pair margin
loss; evaluation reports segmental F1@k (normal segments included) and
frame-level ROC AUC.
"""

__version__ = "0.1.0"

from .model import ADNetConfig, build, forward, max_layers, predict_labels, score_sequence
from .training import TrainConfig, train

__all__ = [
    "ADNetConfig",
    "TrainConfig",
    "__version__",
    "build",
    "forward",
    "max_layers",
    "predict_labels",
    "score_sequence",
    "train",
]
