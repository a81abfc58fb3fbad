"""Rectified Adam.

The adaptive step is scaled by the variance rectification term

    r_t = sqrt(((rho_t - 4)(rho_t - 2) rho_inf) / ((rho_inf - 4)(rho_inf - 2) rho_t))

where rho_t = rho_inf - 2 t beta2^t / (1 - beta2^t) is the length of the
approximated simple moving average and rho_inf = 2 / (1 - beta2) - 1.  While
rho_t <= 4 the variance is intractable and a bias-corrected momentum step is
taken instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class RAdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def rho_inf(self) -> float:
        return 2.0 / (1.0 - self.beta2) - 1.0


def sma_length(t: int, beta2: float) -> float:
    rho_inf = 2.0 / (1.0 - beta2) - 1.0
    b2t = beta2 ** t
    return rho_inf - 2.0 * t * b2t / (1.0 - b2t)


def rectification(rho_t: float, rho_inf: float) -> float:
    return math.sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf
                     / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))


def radam_step(state: RAdamState, params: dict[str, np.ndarray],
               grads: dict[str, np.ndarray], rectify: bool = True) -> float | None:
    """Update ``params`` in place; returns r_t, or None on a momentum-only step.

    With ``rectify=False`` every step is the plain bias-corrected adaptive one.
    """
    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    rho_t = sma_length(t, b2)
    if rectify:
        r_t = rectification(rho_t, state.rho_inf) if rho_t > 4.0 else None
    else:
        r_t = 1.0
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / bc1
        if r_t is None:
            p -= (state.lr * m_hat).astype(p.dtype, copy=False)
        else:
            v_hat = np.sqrt(v / bc2)
            p -= (state.lr * r_t * m_hat / (v_hat + state.eps)).astype(p.dtype, copy=False)
    return r_t
