"""Seeded generators. PCG64 everywhere so a seed pins the whole stream."""

from __future__ import annotations

import numpy as np

ALGORITHM = "PCG64"


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for ``seed``; extra ints select an independent sub-stream."""
    seq = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, stream)])
    return np.random.Generator(np.random.PCG64(seq))
