from __future__ import annotations

import numpy as np

from ..numeric.rng import make_rng


def make_batches(n: int, batch_size: int = 32, seed: int | None = None) -> list[np.ndarray]:
    """Index batches covering ``range(n)`` exactly once; the last one may be short.

    With a seed the order is a seeded permutation, otherwise sequential.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    order = np.arange(n) if seed is None else make_rng(seed).permutation(n)
    return [order[lo:lo + batch_size] for lo in range(0, n, batch_size)]
