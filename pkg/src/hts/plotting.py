"""PNG renderings of the CSV outputs.

Figures are built on bare ``Figure`` objects with the Agg canvas, so no
pyplot state or display is involved.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=100, bbox_inches="tight")
    return path


def _tidy(ax) -> None:
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)


def plot_history(history, path) -> Path:
    """Loss and accuracy per epoch, training against validation."""
    epochs = [r.epoch for r in history]
    fig = Figure(figsize=(9, 3.5))
    for ax, key, label in zip(fig.subplots(1, 2), ("loss", "acc"), ("loss", "accuracy")):
        ax.plot(epochs, [getattr(r, f"train_{key}") for r in history], marker=".", label="train")
        val = [getattr(r, f"val_{key}") for r in history]
        if not np.all(np.isnan(val)):
            ax.plot(epochs, val, marker=".", label="validation")
        ax.set_xlabel("epoch")
        ax.set_ylabel(label)
        ax.legend(frameon=False)
        _tidy(ax)
    return _save(fig, path)


def plot_confusion(counts: np.ndarray, class_names, path, title: str = "") -> Path:
    counts = np.asarray(counts)
    k = counts.shape[0]
    fig = Figure(figsize=(1.0 + 0.6 * k, 0.6 + 0.6 * k))
    ax = fig.subplots()
    im = ax.imshow(counts, cmap="Blues")
    fig.colorbar(im, ax=ax, fraction=0.046)
    ax.set_xticks(range(k), labels=list(class_names), rotation=45, ha="right")
    ax.set_yticks(range(k), labels=list(class_names))
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    half = counts.max() / 2 if counts.size else 0
    for i in range(k):
        for j in range(k):
            ax.text(j, i, int(counts[i, j]), ha="center", va="center", fontsize=8,
                    color="white" if counts[i, j] > half else "black")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_histogram(hist: dict, path) -> Path:
    """One panel per stage of ``intensity_histogram`` output."""
    fig = Figure(figsize=(4.5 * len(hist), 3.2))
    axes = np.atleast_1d(fig.subplots(1, len(hist)))
    for ax, (stage, (counts, edges)) in zip(axes, hist.items()):
        ax.stairs(counts, edges, fill=True, alpha=0.7)
        ax.set_title(stage)
        ax.set_xlabel("intensity")
        _tidy(ax)
    axes[0].set_ylabel("pixels")
    return _save(fig, path)


def plot_crossval(rows, path) -> Path:
    """Per-fold test accuracy for each variant, with the chance line."""
    fig = Figure(figsize=(6, 3.5))
    ax = fig.subplots()
    width = 0.8 / max(len(rows), 1)
    chance = None
    for v, (name, run) in enumerate(rows):
        acc = [f.metrics["test_acc"] for f in run.folds]
        ax.bar(np.arange(len(acc)) + v * width, acc, width, label=name)
        if run.folds:
            chance = 1.0 / run.folds[0].confusion.k
    if chance is not None:
        ax.axhline(chance, color="grey", linestyle="--", linewidth=1, label="chance")
    ax.set_xlabel("fold")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0, 1)
    ax.legend(frameon=False)
    _tidy(ax)
    return _save(fig, path)
