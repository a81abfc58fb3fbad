"""Epoch loop: forward, loss, backward, RAdam step, then the callbacks."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..data.batching import make_batches
from ..data.transforms import AugmentConfig, augment_batch, normalize_batch
from ..model.network import Model, forward, predicted_labels
from ..numeric.rng import make_rng
from ..numeric.tensor import NonFiniteError, Tensor, check_finite, parameters
from .callbacks import (
    EarlyStopState,
    PlateauState,
    early_stop_update,
    plateau_update,
    restore_best,
)
from .checkpoint import save_checkpoint
from .losses import LossConfig, task_loss
from .radam import RAdamState, radam_step

log = logging.getLogger(__name__)

EPOCH_FIELDS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc", "seconds")


class TrainingDiverged(FloatingPointError):
    def __init__(self, batch: int, tensor: str):
        self.batch = batch
        self.tensor = tensor
        super().__init__(f"non-finite values in {tensor!r} at batch {batch}")


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 100
    smoothing: float | None = None  # None: 0.2 for age, 0 for gender
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    plateau_patience: int = 2
    plateau_factor: float = 0.2
    lr_floor: float = 1e-6
    early_stop_patience: int = 5
    min_delta: float = 1e-4
    seed: int = 0
    augment: AugmentConfig | None = None


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float = float("nan")
    val_acc: float = float("nan")
    seconds: float = 0.0

    def row(self) -> list:
        return [self.epoch, *(f"{getattr(self, k):.6g}" for k in EPOCH_FIELDS[1:-1]),
                f"{self.seconds:.4f}"]


@dataclass
class FitResult:
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_val_acc: float = float("nan")
    stopped_early: bool = False
    lr_schedule: list[float] = field(default_factory=list)

    @property
    def mean_epoch_seconds(self) -> float:
        return float(np.mean([r.seconds for r in self.history])) if self.history else 0.0


def accuracy_of(probs: np.ndarray, labels: np.ndarray, task: str) -> float:
    return float(np.mean(predicted_labels(probs, task) == labels)) if len(labels) else float("nan")


def compute_gradients(model: Model, images: np.ndarray, labels: np.ndarray,
                      loss_cfg: LossConfig, buffers=None):
    """One train-mode pass on normalized ``images``; returns (loss, probs, grads by name)."""
    leaves = parameters(model.params)
    probs, tape = forward(model.spec, leaves, images, "train",
                          model.buffers if buffers is None else buffers)
    with tape:
        loss = task_loss(probs, labels, loss_cfg)
    grads = tape.backward(loss)
    return loss.item(), probs.data, {k: grads[t] for k, t in leaves.items()}


def evaluate(model: Model, images: np.ndarray, labels: np.ndarray, loss_cfg: LossConfig,
             batch_size: int = 64) -> tuple[float, float, np.ndarray]:
    """Infer-mode (loss, accuracy, probabilities) on already normalized images."""
    if len(images) == 0:
        return float("nan"), float("nan"), np.zeros((0, model.spec.head_classes))
    probs = model.predict_proba(images, batch_size)
    loss = task_loss(Tensor(probs), labels, loss_cfg).item()
    return loss, accuracy_of(probs, labels, model.spec.task), probs


def train_epoch(model: Model, images: np.ndarray, labels: np.ndarray, loss_cfg: LossConfig,
                opt: RAdamState, cfg: TrainConfig, epoch: int) -> EpochRecord:
    """One pass over the training set; ``images`` are raw 0-255 intensities."""
    if len(images) == 0:
        raise ValueError("training set is empty")
    start = time.perf_counter()
    batches = make_batches(len(images), cfg.batch_size, seed=cfg.seed * 1_000_003 + epoch)
    aug_rng = make_rng(cfg.augment.seed, cfg.seed, epoch) if cfg.augment else None
    total_loss = 0.0
    correct = 0
    for bi, idx in enumerate(batches):
        raw = images[idx]
        if cfg.augment is not None:
            raw = augment_batch(raw, cfg.augment, aug_rng)
        x = normalize_batch(raw, model.dtype)
        loss, probs, grads = compute_gradients(model, x, labels[idx], loss_cfg)
        if not np.isfinite(loss):
            raise TrainingDiverged(bi, "loss")
        try:
            check_finite(grads)
        except NonFiniteError as exc:
            raise TrainingDiverged(bi, f"grad:{exc.name}") from None
        radam_step(opt, model.params, grads)
        total_loss += loss * len(idx)
        correct += int(np.sum(predicted_labels(probs, model.spec.task) == labels[idx]))
    try:
        check_finite(model.params)
    except NonFiniteError as exc:
        raise TrainingDiverged(len(batches) - 1, exc.name) from None
    n = len(images)
    return EpochRecord(epoch, total_loss / n, correct / n, seconds=time.perf_counter() - start)


def write_epoch_csv(path, history: list[EpochRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EPOCH_FIELDS)
        for r in history:
            w.writerow(r.row())


def fit(model: Model, train_images: np.ndarray, train_labels: np.ndarray,
        val_images: np.ndarray, val_labels: np.ndarray, cfg: TrainConfig,
        checkpoint_path=None, csv_path=None,
        on_epoch: Callable[[EpochRecord], None] | None = None,
        val_metric: Callable[[int, float], float] | None = None) -> FitResult:
    """Train with plateau LR cuts, early stopping and best-model checkpointing.

    Validation accuracy drives all three callbacks.  When early stopping
    fires, parameters and buffers are restored to the best epoch.
    ``val_metric(epoch, acc)`` may override the monitored value (tests).
    """
    loss_cfg = LossConfig.for_task(model.spec.task, cfg.smoothing)
    opt = RAdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    plateau = PlateauState(lr=cfg.lr, factor=cfg.plateau_factor, floor=cfg.lr_floor,
                           patience=cfg.plateau_patience, min_delta=cfg.min_delta)
    stopper = EarlyStopState(patience=cfg.early_stop_patience, min_delta=cfg.min_delta)
    val_x = normalize_batch(val_images, model.dtype) if len(val_images) else val_images
    result = FitResult()
    for epoch in range(1, cfg.max_epochs + 1):
        result.lr_schedule.append(opt.lr)
        rec = train_epoch(model, train_images, train_labels, loss_cfg, opt, cfg, epoch)
        if len(val_x):
            rec.val_loss, rec.val_acc, _ = evaluate(model, val_x, val_labels, loss_cfg)
        result.history.append(rec)
        if csv_path is not None:
            write_epoch_csv(csv_path, result.history)
        if on_epoch is not None:
            on_epoch(rec)
        log.info("epoch %d loss %.4f acc %.4f val_loss %.4f val_acc %.4f lr %.2e (%.2fs)",
                 epoch, rec.train_loss, rec.train_acc, rec.val_loss, rec.val_acc, opt.lr, rec.seconds)
        monitored = rec.val_acc if len(val_x) else rec.train_acc
        if val_metric is not None:
            monitored = val_metric(epoch, monitored)
        plateau = plateau_update(plateau, monitored)
        opt.lr = plateau.lr
        previous_best = stopper.best_epoch
        stopper = early_stop_update(stopper, monitored, {**model.params, **model.buffers}, epoch)
        if stopper.best_epoch != previous_best and checkpoint_path is not None:
            save_checkpoint(model, checkpoint_path)
        if stopper.stopped:
            restore_best(stopper, {**model.params, **model.buffers})
            result.stopped_early = True
            break
    result.best_epoch = stopper.best_epoch
    result.best_val_acc = stopper.best
    return result
