"""In-memory labelled image collections."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .images import read_image, resize_bilinear, write_image
from .manifest import ManifestRow, read_manifest, resolve, write_manifest


@dataclass
class Dataset:
    images: np.ndarray  # N x H x W x C, float32 intensities 0-255
    rows: list[ManifestRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.images)

    def labels(self, task: str) -> np.ndarray:
        return np.array([r.label(task) for r in self.rows], dtype=np.int64)

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.images[idx], [self.rows[i] for i in idx])


def load_dataset(manifest, root=None, size: int | None = None) -> Dataset:
    """Read every manifest row's image, resized to ``size`` x ``size``."""
    manifest = Path(manifest)
    root = manifest.parent if root is None else Path(root)
    rows = read_manifest(manifest)
    imgs = []
    for r in rows:
        img = read_image(resolve(root, r))
        if size is not None and img.shape[:2] != (size, size):
            img = resize_bilinear(img, size, size)
        imgs.append(img)
    images = np.stack(imgs).astype(np.float32) if imgs else np.zeros((0, size or 0, size or 0, 3), np.float32)
    return Dataset(images, rows)


def save_dataset(ds: Dataset, out_dir, manifest_name: str = "manifest.csv") -> Path:
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    for img, row in zip(ds.images, ds.rows):
        write_image(out_dir / row.path, img)
    path = out_dir / manifest_name
    write_manifest(path, ds.rows)
    return path
