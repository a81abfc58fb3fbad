"""Learning-rate plateau and early-stopping state machines.

Both monitor validation accuracy (higher is better).  A value counts as an
improvement when it beats the best so far by at least ``min_delta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


def _improved(value: float, best: float, min_delta: float) -> bool:
    if not math.isfinite(value):
        raise ValueError(f"monitored metric must be finite, got {value}")
    return value >= best + min_delta


@dataclass(frozen=True)
class PlateauState:
    lr: float = 1e-4
    factor: float = 0.2
    floor: float = 1e-6
    patience: int = 2
    min_delta: float = 1e-4
    best: float = -math.inf
    stale: int = 0


def plateau_update(state: PlateauState, metric: float) -> PlateauState:
    """Next state after one epoch; the lr is cut by ``factor`` after ``patience`` stale epochs."""
    if _improved(metric, state.best, state.min_delta):
        return replace(state, best=metric, stale=0)
    stale = state.stale + 1
    if stale >= state.patience:
        return replace(state, lr=max(state.lr * state.factor, state.floor), stale=0)
    return replace(state, stale=stale)


@dataclass(frozen=True)
class EarlyStopState:
    patience: int = 5
    min_delta: float = 1e-4
    best: float = -math.inf
    best_epoch: int = -1
    stale: int = 0
    stopped: bool = False
    snapshot: dict[str, np.ndarray] | None = field(default=None, repr=False, compare=False)


def early_stop_update(state: EarlyStopState, metric: float, params: dict[str, np.ndarray],
                      epoch: int) -> EarlyStopState:
    """Track the best epoch; ``stopped`` turns true after ``patience`` stale epochs.

    The snapshot holds copies of ``params`` from the best epoch; restore with
    :func:`restore_best`.
    """
    if _improved(metric, state.best, state.min_delta):
        snap = {k: v.copy() for k, v in params.items()}
        return replace(state, best=metric, best_epoch=epoch, stale=0, snapshot=snap)
    stale = state.stale + 1
    return replace(state, stale=stale, stopped=stale >= state.patience)


def restore_best(state: EarlyStopState, params: dict[str, np.ndarray]) -> None:
    if state.snapshot is None:
        return
    for k, v in state.snapshot.items():
        params[k][...] = v
