"""Cross-entropy losses on predicted probabilities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numeric import tensor as T
from ..numeric.tensor import ContractError, Tensor

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class LossConfig:
    kind: str = "categorical"
    smoothing: float = 0.2

    def __post_init__(self):
        if self.kind not in ("categorical", "binary"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if not 0.0 <= self.smoothing < 1.0:
            raise ValueError("smoothing must lie in [0, 1)")

    @classmethod
    def for_task(cls, task: str, smoothing: float | None = None) -> LossConfig:
        if task == "gender2":
            return cls("binary", 0.0 if smoothing is None else smoothing)
        return cls("categorical", 0.2 if smoothing is None else smoothing)


def smoothed_targets(labels, num_classes: int, alpha: float, dtype=np.float64) -> np.ndarray:
    """(1 - alpha) * onehot + alpha / K.

    The on-label entry is written as the complement of the others so each row
    sums to one without rounding drift.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ContractError(f"labels must lie in [0, {num_classes}), got {labels.min()}..{labels.max()}")
    off = alpha / num_classes
    out = np.full((labels.size, num_classes), off, dtype=dtype)
    out[np.arange(labels.size), labels] = 1.0 - (num_classes - 1) * off
    return out


def smoothed_cross_entropy(probs: Tensor, labels, alpha: float = 0.0) -> Tensor:
    """Batch mean of -sum(target * log(prob)), log clamped at 1e-12."""
    k = probs.shape[-1]
    targets = smoothed_targets(labels, k, alpha, probs.dtype)
    per_sample = T.sum(T.log(probs, LOG_FLOOR) * targets, axis=-1)
    return -T.mean(per_sample)


def binary_cross_entropy(p: Tensor, labels, alpha: float = 0.0) -> Tensor:
    """Batch mean of -[y log p + (1-y) log(1-p)] with p clamped to [1e-12, 1-1e-12]."""
    p = T.as_tensor(p)
    if p.ndim == 2:
        p = T.reshape(p, (p.shape[0],))
    y = np.asarray(labels, dtype=p.dtype).reshape(-1)
    if y.size and not np.all((y == 0) | (y == 1)):
        raise ContractError("binary labels must be 0 or 1")
    y = y * (1.0 - alpha) + 0.5 * alpha
    pc = T.clip(p, LOG_FLOOR, 1.0 - LOG_FLOOR)
    ll = T.log(pc) * y + T.log(1.0 - pc) * (1.0 - y)
    return -T.mean(ll)


def task_loss(probs: Tensor, labels, cfg: LossConfig) -> Tensor:
    if cfg.kind == "binary":
        return binary_cross_entropy(probs, labels, cfg.smoothing)
    return smoothed_cross_entropy(probs, labels, cfg.smoothing)
