"""k-fold cross-validation with a validation split carved from each training fold."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from ..data.dataset import Dataset
from ..data.transforms import normalize_batch
from ..model.config import ModelSpec
from ..model.network import Model, predicted_labels
from ..numeric.rng import make_rng
from ..numeric.tensor import Tensor
from ..training.loop import FitResult, TrainConfig, fit
from ..training.losses import LossConfig, task_loss
from .metrics import ConfusionMatrix, aggregate, confusion

TABLE_COLUMNS = (
    "Training loss mean (Std)",
    "Training accuracy mean (Std)",
    "Validation loss mean (Std)",
    "Validation accuracy mean (Std)",
    "Test loss mean (Std)",
    "Test accuracy mean (Std)",
    "Epoch Time Mean in Sec (Std)",
)
METRICS = ("train_loss", "train_acc", "val_loss", "val_acc", "test_loss", "test_acc", "epoch_seconds")
FOLD_FIELDS = ("fold", *METRICS, "epochs")
MODEL_NAME = "hybrid-sequencer"


class CrossValError(RuntimeError):
    def __init__(self, fold: int, cause: BaseException):
        self.fold = fold
        super().__init__(f"fold {fold} failed: {cause!r}")


@dataclass(frozen=True)
class Fold:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


@dataclass(frozen=True)
class FoldPlan:
    k: int
    seed: int
    folds: tuple[Fold, ...]


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def kfold_plan(n: int, k: int = 5, val_fraction: float = 0.2, seed: int = 0) -> FoldPlan:
    """Shuffle ``range(n)`` into ``k`` test folds (sizes differ by at most one).

    Each fold's validation set is round(val_fraction * |training pool|) ids
    drawn by a fresh seeded shuffle of the pool; no stratification.
    """
    if k < 2 or n < k:
        raise ValueError(f"need k >= 2 and n >= k, got n={n}, k={k}")
    if not 0.0 <= val_fraction < 1.0:
        raise ValueError("val_fraction must lie in [0, 1)")
    order = make_rng(seed).permutation(n)
    parts = np.array_split(order, k)
    folds = []
    for i, test in enumerate(parts):
        pool = np.concatenate([p for j, p in enumerate(parts) if j != i])
        pool = make_rng(seed, i + 1).permutation(pool)
        n_val = _round_half_up(val_fraction * len(pool))
        folds.append(Fold(train=np.sort(pool[n_val:]), val=np.sort(pool[:n_val]), test=np.sort(test)))
    return FoldPlan(k, seed, tuple(folds))


class Predictor(Protocol):
    def predict_proba(self, images: np.ndarray) -> np.ndarray: ...


Trainer = Callable[[ModelSpec, Dataset, Dataset, TrainConfig, int], "tuple[Predictor, FitResult]"]


def default_trainer(spec: ModelSpec, train: Dataset, val: Dataset, cfg: TrainConfig,
                    fold: int) -> tuple[Model, FitResult]:
    model = Model.create(spec, make_rng(cfg.seed, 7919, fold))
    result = fit(model, train.images, train.labels(spec.task), val.images, val.labels(spec.task), cfg)
    return model, result


@dataclass
class FoldResult:
    fold: int
    metrics: dict[str, float]
    epochs: int
    confusion: ConfusionMatrix
    history: FitResult | None = None


@dataclass
class RunAggregate:
    stats: dict[str, tuple[float, float]] = field(default_factory=dict)
    folds: list[FoldResult] = field(default_factory=list)

    @property
    def mean_epoch_seconds(self) -> float:
        return self.stats["epoch_seconds"][0]

    @property
    def test_confusion(self) -> ConfusionMatrix:
        return ConfusionMatrix(sum(f.confusion.counts for f in self.folds))


def _split_metrics(predictor: Predictor, ds: Dataset, spec: ModelSpec, loss_cfg: LossConfig):
    if len(ds) == 0:
        return float("nan"), float("nan"), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    labels = ds.labels(spec.task)
    probs = predictor.predict_proba(normalize_batch(ds.images))
    loss = task_loss(Tensor(np.asarray(probs, dtype=np.float64)), labels, loss_cfg).item()
    pred = predicted_labels(probs, spec.task)
    return loss, float(np.mean(pred == labels)), labels, pred


def crossval_run(spec: ModelSpec, dataset: Dataset, cfg: TrainConfig, k: int = 5,
                 val_fraction: float = 0.2, seed: int | None = None,
                 trainer: Trainer = default_trainer) -> RunAggregate:
    """Train a fresh model per fold and score it on train, validation and test ids.

    Augmentation, when wanted, is carried by ``cfg.augment``.
    """
    plan = kfold_plan(len(dataset), k, val_fraction, cfg.seed if seed is None else seed)
    loss_cfg = LossConfig.for_task(spec.task, cfg.smoothing)
    run = RunAggregate()
    for i, fold in enumerate(plan.folds):
        try:
            train, val, test = (dataset.subset(fold.train), dataset.subset(fold.val),
                                dataset.subset(fold.test))
            predictor, history = trainer(spec, train, val, cfg, i)
            metrics = {}
            metrics["train_loss"], metrics["train_acc"], _, _ = _split_metrics(predictor, train, spec, loss_cfg)
            metrics["val_loss"], metrics["val_acc"], _, _ = _split_metrics(predictor, val, spec, loss_cfg)
            metrics["test_loss"], metrics["test_acc"], y, p = _split_metrics(predictor, test, spec, loss_cfg)
            metrics["epoch_seconds"] = history.mean_epoch_seconds if history is not None else 0.0
            epochs = len(history.history) if history is not None else 0
            run.folds.append(FoldResult(i, metrics, epochs, confusion(y, p, spec.num_classes), history))
        except Exception as exc:
            raise CrossValError(i, exc) from exc
    for m in METRICS:
        run.stats[m] = aggregate(f.metrics[m] for f in run.folds)
    return run


def table_header(task: str) -> list[str]:
    first = "Age classification models" if task == "age8" else "Gender classification models"
    return [first, *TABLE_COLUMNS]


def table_row(name: str, run: RunAggregate) -> list[str]:
    cells = [name]
    for m in METRICS:
        mean, std = run.stats[m]
        cells.append(f"{mean:.1f} ({std:.2f})" if m == "epoch_seconds" else f"{mean:.4f} ({std:.4f})")
    return cells


def write_table_csv(path, task: str, rows: list[tuple[str, RunAggregate]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table_header(task))
        for name, run in rows:
            w.writerow(table_row(name, run))


def write_folds_csv(path, rows: list[tuple[str, RunAggregate]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", *FOLD_FIELDS])
        for name, run in rows:
            for f in run.folds:
                w.writerow([name, f.fold, *(f"{f.metrics[m]:.6g}" for m in METRICS), f.epochs])
