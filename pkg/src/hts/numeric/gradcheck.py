"""Central finite differences as an independent check on ``backward``."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


def numerical_gradient(
    f: Callable[[np.ndarray], float],
    theta: np.ndarray,
    h: float = 1e-5,
    coords: Sequence[int] | None = None,
) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``theta``.

    Only the flat positions in ``coords`` are probed (all when None); the
    rest of the returned array is NaN.  ``theta`` is restored on exit.
    """
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    flat = theta.reshape(-1)
    out = np.full(flat.shape, np.nan)
    idx = range(flat.size) if coords is None else coords
    for i in idx:
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(theta))
        flat[i] = orig - h
        fm = float(f(theta))
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * h)
    return out.reshape(theta.shape)


def relative_error(numeric: np.ndarray, analytic: np.ndarray) -> np.ndarray:
    return np.abs(numeric - analytic) / (np.abs(analytic) + 1e-8)


def finite_difference_check(
    f: Callable[[np.ndarray], float],
    theta: np.ndarray,
    grad: np.ndarray,
    h: float = 1e-5,
    coords: Sequence[int] | None = None,
) -> float:
    """Max over probed coordinates of |fd_i - g_i| / (|g_i| + 1e-8)."""
    num = numerical_gradient(f, theta, h, coords).reshape(-1)
    g = np.asarray(grad, dtype=np.float64).reshape(-1)
    idx = np.arange(num.size) if coords is None else np.asarray(coords, dtype=int)
    if idx.size == 0:
        return 0.0
    return float(np.max(relative_error(num[idx], g[idx])))


def sample_coords(size: int, limit: int | None, rng: np.random.Generator) -> list[int]:
    """All coordinates when small, otherwise ``limit`` distinct random ones."""
    if limit is None or size <= limit:
        return list(range(size))
    return sorted(rng.choice(size, size=limit, replace=False).tolist())
