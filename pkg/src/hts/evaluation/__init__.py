from .crossval import (
    TABLE_COLUMNS,
    CrossValError,
    Fold,
    FoldPlan,
    RunAggregate,
    crossval_run,
    default_trainer,
    kfold_plan,
    table_header,
    write_folds_csv,
    write_table_csv,
)
from .metrics import (
    ConfusionMatrix,
    MetricError,
    accuracy,
    adjacent_accuracy,
    aggregate,
    binary_accuracy,
    confusion,
    f1_scores,
    precision_recall,
)

__all__ = [
    "accuracy",
    "adjacent_accuracy",
    "aggregate",
    "binary_accuracy",
    "confusion",
    "ConfusionMatrix",
    "crossval_run",
    "CrossValError",
    "default_trainer",
    "f1_scores",
    "Fold",
    "FoldPlan",
    "kfold_plan",
    "MetricError",
    "precision_recall",
    "RunAggregate",
    "TABLE_COLUMNS",
    "table_header",
    "write_folds_csv",
    "write_table_csv",
]
