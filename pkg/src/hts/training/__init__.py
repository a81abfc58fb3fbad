from .callbacks import (
    EarlyStopState,
    PlateauState,
    early_stop_update,
    plateau_update,
    restore_best,
)
from .checkpoint import CheckpointFormatError, load_checkpoint, save_checkpoint
from .loop import (
    EpochRecord,
    FitResult,
    TrainConfig,
    TrainingDiverged,
    compute_gradients,
    evaluate,
    fit,
    train_epoch,
    write_epoch_csv,
)
from .losses import (
    LossConfig,
    binary_cross_entropy,
    smoothed_cross_entropy,
    smoothed_targets,
    task_loss,
)
from .radam import RAdamState, radam_step, rectification, sma_length

__all__ = [
    "binary_cross_entropy",
    "CheckpointFormatError",
    "compute_gradients",
    "early_stop_update",
    "EarlyStopState",
    "EpochRecord",
    "evaluate",
    "fit",
    "FitResult",
    "load_checkpoint",
    "LossConfig",
    "plateau_update",
    "PlateauState",
    "radam_step",
    "RAdamState",
    "rectification",
    "restore_best",
    "save_checkpoint",
    "sma_length",
    "smoothed_cross_entropy",
    "smoothed_targets",
    "task_loss",
    "train_epoch",
    "TrainConfig",
    "TrainingDiverged",
    "write_epoch_csv",
]
