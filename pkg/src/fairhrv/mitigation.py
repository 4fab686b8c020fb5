"""Checkpointed multi-task training and uncertainty-based weight selection.

The bias-mitigation procedure: train a two-head model (anxiety + one
protected attribute) under a 4.5:0.5 weighted loss, checkpoint every few
epochs, score each checkpoint's per-head epistemic uncertainty with
Monte-Carlo dropout, pick the checkpoint with the largest
protected-minus-anxiety uncertainty gap, and predict anxiety with those
weights verbatim. Single-task and reweighted baselines share the same
training loop.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint_io import load_checkpoint, save_checkpoint
from .dataset import N_FEATURES, Cohort
from .nnet import (
    AdamState,
    ModelArch,
    ModelParams,
    adam_step,
    backward,
    forward,
    init_params,
    mc_forward,
    mtl_loss,
    sample_dropout_mask,
)
from .rng import substream


class TrainingDiverged(RuntimeError):
    """A non-finite loss appeared during training."""


class NoCheckpoints(ValueError):
    """Checkpoint selection needs at least one uncertainty record."""


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters for all training entry points.

    ``task_weights`` orders (anxiety, protected). ``eval_samples`` caps
    how many training windows the uncertainty evaluation uses (None means
    all of them); ``mc_passes`` is the number of dropout forward passes
    per checkpoint.
    """

    epochs: int = 100
    checkpoint_every: int = 5
    task_weights: tuple = (4.5, 0.5)
    mc_passes: int = 50
    keep_rate: float = 0.8
    lr: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    lstm_hidden: int = 64
    dense_size: int = 32
    eval_samples: int = None
    threshold: float = 0.5

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.checkpoint_every < 1 or self.epochs % self.checkpoint_every != 0:
            raise ValueError("epochs must be a multiple of checkpoint_every")
        if any(w < 0 for w in self.task_weights):
            raise ValueError("task weights must be non-negative")
        if self.mc_passes < 2:
            raise ValueError("need at least 2 Monte-Carlo passes")
        if not 0.0 < self.keep_rate <= 1.0:
            raise ValueError("keep_rate must be in (0, 1]")

    def arch(self, heads) -> ModelArch:
        return ModelArch(
            input_size=N_FEATURES,
            lstm_hidden=self.lstm_hidden,
            dense_size=self.dense_size,
            heads=tuple(heads),
        )


@dataclass(frozen=True)
class UncertaintyRecord:
    """Per-checkpoint mean posterior means and predictive variances."""

    epoch: int
    c_anxiety: float
    c_protected: float
    p_anxiety: float
    p_protected: float
    mc_passes: int

    @property
    def gap(self) -> float:
        return self.c_protected - self.c_anxiety

    def as_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "c_anxiety": self.c_anxiety,
            "c_protected": self.c_protected,
            "p_anxiety": self.p_anxiety,
            "p_protected": self.p_protected,
            "mc_passes": self.mc_passes,
            "gap": self.gap,
        }


@dataclass(frozen=True)
class SelectionResult:
    chosen_epoch: int
    gap: float
    records: tuple

    def as_dict(self) -> dict:
        return {"chosen_epoch": self.chosen_epoch, "gap": self.gap}


def _train_loop(x, targets, task_weights, heads, config: TrainConfig,
                sample_weights=None, checkpoint_epochs=(), out_dir=None):
    """Shared minibatch Adam loop; returns (final params, checkpoints, losses).

    All shuffling and dropout randomness derives from named substreams of
    config.seed, so a trajectory depends only on (data, config).
    """
    arch = config.arch(heads)
    params = init_params(arch, config.seed)
    params.rng_seed = config.seed
    state = AdamState.for_params(params)
    n = x.shape[0]
    task_w = {head: task_weights[head] for head in heads}

    checkpoints = []
    epoch_losses = []
    out_dir = Path(out_dir) if out_dir is not None else None
    for epoch in range(1, config.epochs + 1):
        order = substream(config.seed, "shuffle", epoch).permutation(n)
        mask_rng = substream(config.seed, "dropout", epoch)
        total = 0.0
        batches = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb = x[idx]
            tb = {head: targets[head][idx] for head in heads}
            sw = None if sample_weights is None else sample_weights[idx]
            mask = sample_dropout_mask(arch, config.keep_rate, mask_rng, batch=len(idx))
            outputs, trace = forward(params, xb, mask=mask)
            loss = mtl_loss(outputs, tb, task_w, sample_weights=sw)
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {batches} (lr={config.lr})"
                )
            total += loss
            batches += 1
            grads = backward(params, trace, tb, task_w, sample_weights=sw)
            params, state = adam_step(params, grads, state, config.lr)
        epoch_losses.append(total / max(1, batches))
        if epoch in checkpoint_epochs:
            snapshot = params.copy()
            snapshot.epoch = epoch
            snapshot.rng_seed = config.seed
            if out_dir is not None:
                save_checkpoint(snapshot, out_dir / f"ckpt_epoch_{epoch}.bin")
            checkpoints.append(snapshot)
    params.epoch = config.epochs
    return params, checkpoints, epoch_losses


def _cohort_inputs(cohort: Cohort, protected: str = None):
    x = cohort.feature_tensor()
    targets = {"anxiety": cohort.labels().astype(np.float64)}
    if protected is not None:
        targets["protected"] = cohort.protected_values(protected).astype(np.float64)
    return x, targets


def train_baseline(train: Cohort, config: TrainConfig):
    """Single-head anxiety model; returns (params, per-epoch mean losses)."""
    x, targets = _cohort_inputs(train)
    params, _, losses = _train_loop(x, targets, {"anxiety": 1.0}, ("anxiety",), config)
    return params, losses


def train_reweighted(train: Cohort, config: TrainConfig, weights):
    """Baseline with per-sample loss weights (weighted-mean normalized).

    Within each batch the loss is sum(w_i * bce_i) / sum(w_i), so scaling
    every weight by a constant leaves the trajectory unchanged and a
    zero-weight sample contributes nothing.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if np.any(weights < 0) or weights.sum() <= 0:
        raise ValueError("sample weights must be non-negative with positive sum")
    x, targets = _cohort_inputs(train)
    if len(weights) != x.shape[0]:
        raise ValueError("need exactly one weight per training window")
    params, _, losses = _train_loop(
        x, targets, {"anxiety": 1.0}, ("anxiety",), config, sample_weights=weights
    )
    return params, losses


def train_mtl_with_checkpoints(train: Cohort, protected: str, config: TrainConfig, out_dir=None):
    """Two-head training with a checkpoint every ``checkpoint_every`` epochs.

    Returns (checkpoints, final params, losses); checkpoints carry their
    epoch tag and are additionally written to ``out_dir`` when given
    (ckpt_epoch_{N}.bin).

    Raises:
        MissingAttribute: cohort lacks the protected attribute.
        TrainingDiverged: non-finite loss.
    """
    x, targets = _cohort_inputs(train, protected)
    task_w = {"anxiety": config.task_weights[0], "protected": config.task_weights[1]}
    checkpoint_epochs = tuple(
        range(config.checkpoint_every, config.epochs + 1, config.checkpoint_every)
    )
    params, checkpoints, losses = _train_loop(
        x, targets, task_w, ("anxiety", "protected"), config,
        checkpoint_epochs=checkpoint_epochs, out_dir=out_dir,
    )
    return checkpoints, params, losses


def evaluate_uncertainties(checkpoints, cohort: Cohort, config: TrainConfig):
    """Score every checkpoint's per-head epistemic uncertainty.

    Per checkpoint: ``mc_passes`` dropout forward passes per window give a
    per-window predictive variance for each head; the record stores the
    arithmetic mean over windows. The mask stream is seeded per checkpoint
    epoch, so results do not depend on evaluation order. With
    ``config.eval_samples`` set, a fixed random subset of windows is used.
    """
    x = cohort.feature_tensor()
    if config.eval_samples is not None and config.eval_samples < x.shape[0]:
        pick = substream(config.seed, "mc-subsample").choice(
            x.shape[0], size=config.eval_samples, replace=False
        )
        x = x[np.sort(pick)]
    records = []
    for ckpt in checkpoints:
        rng = substream(config.seed, "mc-eval", ckpt.epoch)
        means, variances = mc_forward(ckpt, x, passes=config.mc_passes,
                                      keep_rate=config.keep_rate, rng=rng)
        records.append(
            UncertaintyRecord(
                epoch=ckpt.epoch,
                c_anxiety=float(np.mean(variances["anxiety"])),
                c_protected=float(np.mean(variances["protected"])),
                p_anxiety=float(np.mean(means["anxiety"])),
                p_protected=float(np.mean(means["protected"])),
                mc_passes=config.mc_passes,
            )
        )
    return records


def select_checkpoint(records) -> SelectionResult:
    """Argmax of (c_protected - c_anxiety); ties go to the earliest epoch.

    Raises:
        NoCheckpoints: empty record list.
    """
    records = tuple(records)
    if not records:
        raise NoCheckpoints("no uncertainty records to select from")
    best = records[0]
    for record in records[1:]:
        if record.gap > best.gap:
            best = record
    return SelectionResult(chosen_epoch=best.epoch, gap=best.gap, records=records)


def final_predict(checkpoint, cohort: Cohort, threshold: float = 0.5):
    """Deterministic anxiety predictions from a checkpoint.

    ``checkpoint`` may be ModelParams or a path to a serialized file. The
    protected head's output is discarded. Returns (predictions, probabilities).
    """
    params = checkpoint if isinstance(checkpoint, ModelParams) else load_checkpoint(checkpoint)
    outputs, _ = forward(params, cohort.feature_tensor(), mask=None)
    probs = outputs["anxiety"]
    preds = (probs >= threshold).astype(np.int64)
    return preds, probs
