"""Finite-difference audit of every block and of the full model (float64, toy preset)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import blocks
from .model.config import ModelSpec, toy
from .model.network import Model, forward
from .numeric import tensor as T
from .numeric.gradcheck import numerical_gradient, relative_error, sample_coords
from .numeric.rng import make_rng
from .numeric.tensor import GradTape, Tensor
from .training.losses import LossConfig, task_loss

TOLERANCE = 1e-4
STEP = 1e-5


@dataclass
class BlockCheck:
    block: str
    errors: dict[str, float] = field(default_factory=dict)  # parameter name -> max rel. error

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def worst(self) -> str:
        return max(self.errors, key=self.errors.get) if self.errors else ""

    def failing(self, tol: float = TOLERANCE) -> list[str]:
        return [k for k, v in self.errors.items() if not v <= tol]

    def passed(self, tol: float = TOLERANCE) -> bool:
        return not self.failing(tol)


def check_block(name: str, fn: Callable[[dict[str, Tensor]], Tensor], params: dict[str, np.ndarray],
                rng: np.random.Generator, per_tensor: int | None = 6, h: float = STEP) -> BlockCheck:
    """Compare tape gradients of scalar ``fn`` with central differences.

    At most ``per_tensor`` random coordinates are probed per tensor (all if None).
    """
    leaves = {k: Tensor(v, requires_grad=True, name=k) for k, v in params.items()}
    with GradTape() as tape:
        out = fn(leaves)
    grads = tape.backward(out)
    result = BlockCheck(name)
    for pname, arr in params.items():
        work = {k: Tensor(v) for k, v in params.items()}
        theta = arr.copy()
        work[pname] = Tensor(theta)

        def f(_theta, _work=work):
            return fn(_work).item()

        coords = sample_coords(theta.size, per_tensor, rng)
        num = numerical_gradient(f, theta, h, coords).reshape(-1)
        g = grads[leaves[pname]].reshape(-1)
        result.errors[pname] = float(np.max(relative_error(num[coords], g[coords])))
    return result


def _projection(rng, shape):
    w = rng.standard_normal(shape)
    return lambda out: T.sum(out * w)


def _subset(params, prefix):
    return {k: v for k, v in params.items() if k.startswith(prefix)}


def gradcheck_report(spec: ModelSpec | None = None, seed: int = 0, per_tensor: int | None = 6,
                     batch: int = 2) -> list[BlockCheck]:
    """Gradient audit of attention, encoder stack, batch norm, BiLSTM, sequencer, heads, model."""
    spec = spec or toy()
    rng = make_rng(seed)
    model = Model.create(spec, rng, np.float64)
    # perturb norm scales/shifts and the zero biases so no gradient is trivially constant
    params = {k: v + 0.1 * rng.standard_normal(v.shape) for k, v in model.params.items()}
    enc, seq = spec.encoder, spec.sequencer
    d, t_all, n = enc.dim, spec.num_tokens, spec.patch.num_patches
    checks = []

    tokens = rng.standard_normal((batch, t_all, d))
    proj = _projection(rng, (batch, t_all, d))
    checks.append(check_block(
        "attention",
        lambda p: proj(blocks.self_attention(Tensor(tokens), p, "encoder.0.attn", enc.heads)),
        _subset(params, "encoder.0.attn."), rng, per_tensor))

    proj = _projection(rng, (batch, t_all, d))
    checks.append(check_block(
        "encoder",
        lambda p: proj(blocks.encode(Tensor(tokens), p, enc)),
        _subset(params, "encoder."), rng, per_tensor))

    seq_in = rng.standard_normal((batch, n, d)) * 2.0 + 0.5
    proj = _projection(rng, (batch, n, d))
    checks.append(check_block(
        "batch_norm",
        lambda p: proj(blocks.batch_norm(Tensor(seq_in), p["sequencer.bn1.scale"],
                                         p["sequencer.bn1.shift"], "train", None,
                                         eps=seq.epsilon_bn)),
        _subset(params, "sequencer.bn1."), rng, per_tensor))

    proj = _projection(rng, (batch, n, 2 * seq.units1))
    checks.append(check_block(
        "bilstm",
        lambda p: proj(blocks.bilstm(Tensor(seq_in), p, "sequencer.lstm1", seq.units1)),
        _subset(params, "sequencer.lstm1."), rng, per_tensor))

    proj = _projection(rng, (batch, spec.feature_dim))
    checks.append(check_block(
        "sequencer",
        lambda p: proj(blocks.hybrid_sequencer(Tensor(seq_in), seq, p, "train", None)),
        _subset(params, "sequencer."), rng, per_tensor))

    feats = rng.standard_normal((batch, spec.feature_dim))
    for task in ("age8", "gender2"):
        k = 8 if task == "age8" else 1
        head = {"head.weight": 0.1 * rng.standard_normal((spec.feature_dim, k)),
                "head.bias": 0.1 * rng.standard_normal(k)}
        proj = _projection(rng, (batch, k))
        checks.append(check_block(
            f"head[{task}]",
            lambda p, _task=task, _proj=proj: _proj(blocks.prediction_head(Tensor(feats), p, _task)),
            head, rng, per_tensor))

    images = rng.standard_normal((batch, *spec.image_shape))
    labels = np.arange(batch) % spec.num_classes
    loss_cfg = LossConfig.for_task(spec.task)

    def model_loss(p):
        probs, _ = forward(spec, p, images, "train", None)
        return task_loss(probs, labels, loss_cfg)

    checks.append(check_block("model", model_loss, params, rng, per_tensor))
    return checks

