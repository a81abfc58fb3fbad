"""Class-separable synthetic faces-stand-in images for desk-scale runs.

Each image is a noisy dark background with a bright centred square.  The
square's side encodes the age group and its tint encodes gender (red-heavy
for f, blue-heavy for m).  Both cues survive flips, transposes and small
rotations, so augmentation stays label-preserving.
"""

from __future__ import annotations

import numpy as np

from ..numeric.rng import make_rng
from .dataset import Dataset
from .manifest import AGE_GROUPS, GENDERS, Detection, ManifestRow


def _render(size: int, age: int, gender: int, rng: np.random.Generator) -> np.ndarray:
    img = rng.uniform(10, 70) + rng.normal(0, 12, (size, size, 3))
    side = int(round(size * (0.2 + 0.09 * age)))
    jitter = rng.integers(-1, 2, size=2)
    y0 = (size - side) // 2 + jitter[0]
    x0 = (size - side) // 2 + jitter[1]
    y0, x0 = np.clip([y0, x0], 0, size - side)
    level = rng.uniform(170, 240)
    tint = np.array([1.0, 0.55, 0.3]) if GENDERS[gender] == "f" else np.array([0.3, 0.55, 1.0])
    img[y0:y0 + side, x0:x0 + side] = level * tint + rng.normal(0, 12, (side, side, 3))
    return np.clip(img, 0, 255)


def synthesize_dataset(n: int, classes: int = 8, size: int = 32, seed: int = 0,
                       counts: list[int] | None = None) -> Dataset:
    """``n`` images whose primary label has ``classes`` values (8: age, 2: gender).

    Primary labels are balanced (``i % classes``) unless ``counts`` gives
    per-class totals; the other attribute is drawn at random.
    """
    if classes not in (2, 8):
        raise ValueError("classes must be 8 (age groups) or 2 (genders)")
    if counts is None:
        if n < classes:
            raise ValueError(f"need n >= classes, got n={n}, classes={classes}")
        primary = [i % classes for i in range(n)]
    else:
        if len(counts) != classes or sum(counts) != n:
            raise ValueError("counts must have one entry per class and sum to n")
        primary = [c for c, k in enumerate(counts) for _ in range(k)]
    rng = make_rng(seed)
    images, rows = [], []
    for i, label in enumerate(primary):
        if classes == 8:
            age, gender = label, int(rng.integers(2))
        else:
            age, gender = int(rng.integers(8)), label
        images.append(_render(size, age, gender, rng))
        rows.append(ManifestRow(f"images/synth_{i:05d}.ppm", AGE_GROUPS[age], GENDERS[gender],
                                Detection(0, 0, size, size, 1.0)))
    return Dataset(np.stack(images).astype(np.float32), rows)
