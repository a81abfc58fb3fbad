"""Assembly of the blocks into a classifier."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numeric.tensor import GradTape, Tensor, _active_tape
from . import blocks
from .config import ModelSpec
from .params import buffer_schema, init_buffers, init_params, param_schema, validate


@dataclass
class Model:
    """A spec with its parameters and batch-norm buffers."""

    spec: ModelSpec
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def create(cls, spec: ModelSpec, rng: np.random.Generator, dtype=np.float32) -> Model:
        return cls(spec, init_params(spec, rng, dtype), init_buffers(spec, dtype))

    def validate(self) -> None:
        validate(self.params, param_schema(self.spec))
        validate(self.buffers, buffer_schema(self.spec), "buffer")

    def copy(self) -> Model:
        return Model(self.spec, {k: v.copy() for k, v in self.params.items()},
                     {k: v.copy() for k, v in self.buffers.items()})

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def predict_proba(self, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
        outs = []
        for lo in range(0, len(images), batch_size):
            probs, _ = forward(self.spec, self.params, images[lo:lo + batch_size], "infer", self.buffers)
            outs.append(probs.data)
        if not outs:
            return np.zeros((0, self.spec.head_classes), dtype=self.dtype)
        return np.concatenate(outs, axis=0)

    def predict(self, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
        return predicted_labels(self.predict_proba(images, batch_size), self.spec.task)


def predicted_labels(probs: np.ndarray, task: str) -> np.ndarray:
    if task == "gender2":
        return (probs[:, 0] > 0.5).astype(np.int64)
    return np.argmax(probs, axis=1).astype(np.int64)


def forward(spec: ModelSpec, params, batch, mode: str = "infer", buffers=None,
            tape: GradTape | None = None, attention_sink: list | None = None):
    """Run the classifier on a B x H x W x C batch.

    ``params`` may hold plain arrays or Tensors.  In ``train`` mode arrays are
    wrapped as gradient leaves and the ops are recorded on ``tape`` (a fresh
    one when not given); returns ``(probabilities, tape)``.  In ``infer`` mode
    nothing is recorded and the tape is None.  An already active tape is reused.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")
    batch = batch.data if isinstance(batch, Tensor) else np.asarray(batch)
    if batch.ndim != 4 or batch.shape[1:] != spec.image_shape:
        raise ValueError(f"batch shape {batch.shape} does not match model input {spec.image_shape}")
    train = mode == "train"
    leaves = {
        k: v if isinstance(v, Tensor) else Tensor(v, requires_grad=train, name=k)
        for k, v in params.items()
    }
    if train and tape is None:
        tape = _active_tape()
        if tape is None:
            tape = GradTape()
    if tape is None:
        return _run(spec, leaves, batch, mode, buffers, attention_sink), None
    with tape:
        out = _run(spec, leaves, batch, mode, buffers, attention_sink)
    return out, tape


def _run(spec, p, batch, mode, buffers, attention_sink):
    tokens = blocks.embed_patches(batch.astype(p["embed.patch.weight"].dtype, copy=False),
                                  spec.patch, spec.encoder, p)
    encoded = blocks.encode(tokens, p, spec.encoder, attention_sink)
    features = blocks.hybrid_sequencer(blocks.sequence_tokens(encoded, spec), spec.sequencer,
                                       p, mode, buffers)
    return blocks.prediction_head(features, p, spec.task)
