"""Loss functions and the window-batched training loop.

Each stage's loss is masked MSE plus a weighted hard-pair margin term.
The margin term pairs every clip with the opposite-class clip whose
predicted score is nearest (the hard pair, recomputed every step), takes
the mean margin per class, and applies a single hinge:

    max(-(M_abnormal + M_normal), 0)

with M_abnormal the mean of (score_abnormal - score_hard_normal - alpha)
and M_normal the mean of (score_hard_abnormal - score_normal - alpha).
Hard pairs are searched within one window, the unit of an optimizer step.
Stage losses are summed and one Adam step is taken per window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import model as architecture
from . import numerics, windowing
from .errors import ConfigError, InputError, NumericError
from .model import ADNetConfig, ModelParams
from .numerics import AdamState, Tape, Tensor


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-4
    lambda_: float = 0.5          # weight of the margin term inside each stage loss
    alpha: float = 0.5            # target score gap between hard pairs
    epochs: int = 50
    seed: int = 0
    use_ad_loss: bool = True
    clip_label_fraction: float = 0.5

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 < self.lambda_ < 1.0:
            raise ConfigError(f"lambda must lie in (0, 1), got {self.lambda_}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if not 0.0 < self.clip_label_fraction <= 1.0:
            raise ConfigError(
                f"clip_label_fraction must lie in (0, 1], got {self.clip_label_fraction}")


def clip_labels_from_frames(frame_labels, frames_per_clip: int,
                            fraction: float = 0.5) -> np.ndarray:
    """Collapse frame labels to clip labels: clip i covers frames
    [n*i, n*(i+1)) and is abnormal when its abnormal-frame share reaches
    the fraction (>=, so an exact tie is abnormal). The last clip may
    cover fewer than n frames."""
    labels = np.asarray(frame_labels)
    if labels.size == 0:
        raise InputError("frame label vector is empty")
    if frames_per_clip < 1:
        raise ConfigError(f"frames_per_clip must be >= 1, got {frames_per_clip}")
    if not np.all((labels == 0) | (labels == 1)):
        raise InputError("frame labels must be 0 or 1")
    num_clips = -(-labels.size // frames_per_clip)
    out = np.zeros(num_clips, dtype=np.int64)
    for i in range(num_clips):
        chunk = labels[i * frames_per_clip:(i + 1) * frames_per_clip]
        if chunk.sum() >= fraction * chunk.size:
            out[i] = 1
    return out


def _flat_inputs(scores: Tensor, targets, mask):
    y = scores.value.reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    m = np.asarray(mask, dtype=np.float64).reshape(-1)
    if not (y.shape == t.shape == m.shape):
        raise InputError(
            f"scores ({y.shape[0]}), targets ({t.shape[0]}) and mask ({m.shape[0]}) "
            "must have equal length")
    if not np.all((m == 0.0) | (m == 1.0)):
        raise InputError("mask entries must be 0 or 1")
    return y, t, m


def mse_loss(scores: Tensor, targets, mask, tape: Tape | None = None) -> Tensor:
    """Mean squared error over unmasked positions only."""
    y, t, m = _flat_inputs(scores, targets, mask)
    n = m.sum()
    if n == 0:
        raise InputError("loss over a fully masked window is undefined")
    diff = (y - t) * m
    out = Tensor(np.dot(diff, diff) / n)
    if tape is not None:
        def pullback():
            g = out.grad
            if g is None:
                return
            scores.accumulate_grad(((2.0 / n) * g * diff).reshape(scores.value.shape))
        tape.record(out, pullback)
    return out


def ad_loss(scores: Tensor, targets, mask, alpha: float,
            tape: Tape | None = None) -> Tensor:
    """Hard-pair margin hinge; exactly 0 when either class is absent among
    unmasked clips, and 0 whenever both per-class mean margins are already
    non-negative."""
    y, t, m = _flat_inputs(scores, targets, mask)
    if m.sum() == 0:
        raise InputError("loss over a fully masked window is undefined")
    unmasked = m == 1.0
    abnormal = np.flatnonzero(unmasked & (t == 1.0))
    normal = np.flatnonzero(unmasked & (t == 0.0))
    if abnormal.size == 0 or normal.size == 0:
        return Tensor(0.0)
    ya = y[abnormal]
    yn = y[normal]
    dist = np.abs(ya[:, None] - yn[None, :])
    hard_normal = dist.argmin(axis=1)    # per abnormal clip
    hard_abnormal = dist.argmin(axis=0)  # per normal clip
    margin_abn = float(np.mean(ya - yn[hard_normal] - alpha))
    margin_nrm = float(np.mean(ya[hard_abnormal] - yn - alpha))
    value = max(-(margin_abn + margin_nrm), 0.0)
    out = Tensor(value)
    if tape is not None and value > 0.0:
        na, nn = abnormal.size, normal.size
        def pullback():
            g = out.grad
            if g is None:
                return
            gy = np.zeros_like(y)
            gy[abnormal] -= g / na
            np.add.at(gy, normal[hard_normal], g / na)
            np.add.at(gy, abnormal[hard_abnormal], -g / nn)
            gy[normal] += g / nn
            scores.accumulate_grad(gy.reshape(scores.value.shape))
        tape.record(out, pullback)
    return out


@dataclass
class WindowLoss:
    total: Tensor   # scalar node, differentiable
    mse: float      # summed over stages
    ad: float       # summed over stages, before the lambda weight


def total_loss(stage_outputs: Sequence[Tensor], targets, mask,
               config: TrainConfig, tape: Tape | None = None) -> WindowLoss:
    """Sum over stages of (MSE + lambda * margin loss)."""
    if not stage_outputs:
        raise InputError("at least one stage output is required")
    terms: list[Tensor] = []
    mse_sum = 0.0
    ad_sum = 0.0
    for scores in stage_outputs:
        mse_term = mse_loss(scores, targets, mask, tape)
        mse_sum += float(mse_term.value)
        terms.append(mse_term)
        if config.use_ad_loss:
            ad_term = ad_loss(scores, targets, mask, config.alpha, tape)
            ad_sum += float(ad_term.value)
            terms.append(numerics.scalar_scale(ad_term, config.lambda_, tape))
    return WindowLoss(total=numerics.scalar_sum(terms, tape), mse=mse_sum, ad=ad_sum)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_mse: float
    mean_ad: float
    mean_total: float


@dataclass
class TrainResult:
    params: ModelParams
    adam: AdamState
    epochs_completed: int
    log: list[EpochStats]


def _window_items(dataset, width: int):
    """All (window, padded targets) pairs across the dataset."""
    items = []
    for index, (features, labels) in enumerate(dataset):
        feats = np.asarray(features, dtype=np.float64)
        labs = np.asarray(labels)
        total = feats.shape[1]
        if labs.shape != (total,):
            raise InputError(
                f"sequence {index}: {total} clips but {labs.shape[0] if labs.ndim else 0} labels")
        plan = windowing.plan_windows(total, width)
        for window in windowing.materialize(feats, f"seq{index}", plan):
            real = int(window.mask.sum())
            targets = np.zeros(width)
            targets[:real] = labs[window.start_clip:window.start_clip + real]
            items.append((window, targets))
    return items


def train(dataset: Sequence[tuple[np.ndarray, np.ndarray]],
          model_config: ADNetConfig, train_config: TrainConfig, *,
          resume: TrainResult | None = None) -> TrainResult:
    """Window-batched optimization: every epoch shuffles all windows of all
    videos and takes one Adam step per window. Deterministic for a fixed
    seed; resuming continues the epoch numbering and the per-epoch shuffle
    streams, so an interrupted run matches an uninterrupted one.
    """
    if len(dataset) == 0:
        raise InputError("training dataset is empty")
    for index, (features, _) in enumerate(dataset):
        dim = np.asarray(features).shape[0]
        if dim != model_config.input_dim:
            raise InputError(
                f"sequence {index} has feature dim {dim}, model expects "
                f"{model_config.input_dim}")
    items = _window_items(dataset, model_config.window_width)
    if resume is not None:
        if resume.params.config != model_config:
            raise ConfigError("resume parameters were built for a different model config")
        params = resume.params
        adam = resume.adam
        start_epoch = resume.epochs_completed
        log = list(resume.log)
    else:
        params = architecture.build(model_config, train_config.seed)
        adam = numerics.init_adam(params.tensor_list(), train_config.learning_rate)
        start_epoch = 0
        log = []
    tensors = params.tensor_list()
    for epoch in range(start_epoch, start_epoch + train_config.epochs):
        order = np.random.default_rng([train_config.seed, epoch]).permutation(len(items))
        mse_sum = ad_sum = total_sum = 0.0
        for item in order:
            window, targets = items[item]
            tape = Tape()
            outputs = architecture.forward(params, window, tape)
            loss = total_loss(outputs, targets, window.mask, train_config, tape)
            value = float(loss.total.value)
            if not math.isfinite(value):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            tape.backward(loss.total)
            numerics.adam_step(tensors, adam)
            numerics.zero_grads(tensors)
            mse_sum += loss.mse
            ad_sum += loss.ad
            total_sum += value
        count = len(items)
        log.append(EpochStats(epoch, mse_sum / count, ad_sum / count, total_sum / count))
    return TrainResult(params=params, adam=adam,
                       epochs_completed=start_epoch + train_config.epochs, log=log)
