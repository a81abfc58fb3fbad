"""Per-sample intensity normalization, random augmentation, intensity histograms."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

STD_FLOOR = 1e-7


def normalize_batch(batch: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Rescale 0-255 to 0-1, then centre and scale each sample by its own mean and std.

    Statistics run over all pixels and channels of a sample; the standard
    deviation is the population one, floored at 1e-7.
    """
    x = np.asarray(batch, dtype=np.float64) / 255.0
    axes = tuple(range(1, x.ndim))
    x = x - x.mean(axis=axes, keepdims=True)
    std = np.sqrt(np.mean(x * x, axis=axes, keepdims=True))
    return (x / np.maximum(std, STD_FLOOR)).astype(dtype)


@dataclass(frozen=True)
class AugmentConfig:
    flip_prob: float = 0.5
    transpose_prob: float = 0.25
    saturation: tuple[float, float] = (0.8, 1.2)
    rotation: float = 15.0
    seed: int = 0

    def __post_init__(self):
        for p in (self.flip_prob, self.transpose_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")
        lo, hi = self.saturation
        if not (np.isfinite(lo) and np.isfinite(hi) and 0 <= lo <= hi):
            raise ValueError(f"bad saturation range {self.saturation}")
        if not np.isfinite(self.rotation) or self.rotation < 0:
            raise ValueError(f"bad rotation range {self.rotation}")

    @classmethod
    def identity(cls, seed: int = 0) -> AugmentConfig:
        return cls(0.0, 0.0, (1.0, 1.0), 0.0, seed)


def hflip(img: np.ndarray) -> np.ndarray:
    return img[:, ::-1]


def augment(img: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Random flip, transpose (square images), per-channel saturation and rotation.

    Works on 0-255 intensities; the result is clamped back to that range.
    The same draws are consumed whatever the outcome, so streams stay aligned.
    """
    flip = rng.random() < cfg.flip_prob
    trans = rng.random() < cfg.transpose_prob
    scales = rng.uniform(cfg.saturation[0], cfg.saturation[1], size=img.shape[-1])
    angle = rng.uniform(-cfg.rotation, cfg.rotation)
    out = np.asarray(img, dtype=np.float32)
    if flip:
        out = hflip(out)
    if trans and out.shape[0] == out.shape[1]:
        out = np.swapaxes(out, 0, 1)
    if cfg.saturation != (1.0, 1.0):
        out = out * scales.astype(np.float32)
    if angle != 0.0:
        out = ndimage.rotate(out, angle, axes=(1, 0), reshape=False, order=1, mode="nearest")
    return np.clip(out, 0.0, 255.0).astype(np.float32)


def augment_batch(batch: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    return np.stack([augment(img, cfg, rng) for img in batch]) if len(batch) else batch


def intensity_histogram(batch: np.ndarray, bins: int = 16) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Bin counts of pixel intensities before (0-255) and after normalization."""
    if bins < 1:
        raise ValueError("need at least one bin")
    raw = np.asarray(batch, dtype=np.float64)
    if raw.size and raw.min() == raw.max():
        raw_range = None
    else:
        raw_range = (0.0, 255.0)
    out = {"raw": np.histogram(raw, bins=bins, range=raw_range)}
    out["normalized"] = np.histogram(normalize_batch(raw, np.float64), bins=bins)
    return out


def write_histogram_csv(path, hist: dict[str, tuple[np.ndarray, np.ndarray]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage", "bin_lo", "bin_hi", "count"])
        for stage, (counts, edges) in hist.items():
            for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
                w.writerow([stage, f"{lo:.6g}", f"{hi:.6g}", int(c)])
