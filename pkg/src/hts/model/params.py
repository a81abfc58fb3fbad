"""Named parameter schema, initialization and validation."""

from __future__ import annotations

import numpy as np

from .config import ModelSpec

GATES = ("input", "forget", "cell", "output")


class SchemaError(ValueError):
    """Parameter set does not match the schema of a model spec."""


def _lstm_entries(prefix: str, in_dim: int, units: int):
    for direction in ("fwd", "bwd"):
        yield f"{prefix}.{direction}.input_weight", (in_dim, 4 * units)
        yield f"{prefix}.{direction}.recurrent_weight", (units, 4 * units)
        yield f"{prefix}.{direction}.bias", (4 * units,)


def param_schema(spec: ModelSpec) -> dict[str, tuple[int, ...]]:
    """Every learnable tensor of ``spec`` with its shape, in forward order.

    LSTM gate blocks are packed along the last axis in the order
    input, forget, cell, output.
    """
    p, e, s = spec.patch, spec.encoder, spec.sequencer
    d = e.dim
    out: dict[str, tuple[int, ...]] = {
        "embed.patch.weight": (p.patch_len, d),
        "embed.patch.bias": (d,),
    }
    if e.include_class_token:
        out["embed.class_token"] = (1, d)
    out["embed.position"] = (spec.num_tokens, d)
    for i in range(e.layers):
        pre = f"encoder.{i}"
        out[f"{pre}.ln1.scale"] = (d,)
        out[f"{pre}.ln1.shift"] = (d,)
        out[f"{pre}.attn.query.weight"] = (d, d)
        out[f"{pre}.attn.query.bias"] = (d,)
        # no key bias: it shifts every score in a row equally and cancels in softmax
        out[f"{pre}.attn.key.weight"] = (d, d)
        out[f"{pre}.attn.value.weight"] = (d, d)
        out[f"{pre}.attn.value.bias"] = (d,)
        out[f"{pre}.attn.out.weight"] = (d, d)
        out[f"{pre}.attn.out.bias"] = (d,)
        out[f"{pre}.ln2.scale"] = (d,)
        out[f"{pre}.ln2.shift"] = (d,)
        out[f"{pre}.mlp.fc1.weight"] = (d, e.mlp_dim)
        out[f"{pre}.mlp.fc1.bias"] = (e.mlp_dim,)
        out[f"{pre}.mlp.fc2.weight"] = (e.mlp_dim, d)
        out[f"{pre}.mlp.fc2.bias"] = (d,)
    out["encoder.norm.scale"] = (d,)
    out["encoder.norm.shift"] = (d,)
    out["sequencer.bn1.scale"] = (d,)
    out["sequencer.bn1.shift"] = (d,)
    out.update(_lstm_entries("sequencer.lstm1", d, s.units1))
    level1 = d + 2 * s.units1
    out["sequencer.bn2.scale"] = (level1,)
    out["sequencer.bn2.shift"] = (level1,)
    out.update(_lstm_entries("sequencer.lstm2", level1, s.units2))
    out["head.weight"] = (spec.feature_dim, spec.head_classes)
    out["head.bias"] = (spec.head_classes,)
    return out


def buffer_schema(spec: ModelSpec) -> dict[str, tuple[int, ...]]:
    """Non-learnable state: batch-norm running statistics and update counts."""
    d = spec.encoder.dim
    level1 = d + 2 * spec.sequencer.units1
    out = {}
    for name, width in (("bn1", d), ("bn2", level1)):
        out[f"sequencer.{name}.running_mean"] = (width,)
        out[f"sequencer.{name}.running_var"] = (width,)
        out[f"sequencer.{name}.updates"] = (1,)
    return out


def count_params(spec: ModelSpec) -> int:
    return int(sum(np.prod(s) for s in param_schema(spec).values()))


def _trunc_normal(rng, shape, std, dtype):
    x = rng.standard_normal(shape)
    bad = np.abs(x) > 2.0
    while bad.any():
        x[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(x) > 2.0
    return (x * std).astype(dtype)


def init_params(spec: ModelSpec, rng: np.random.Generator, dtype=np.float32) -> dict[str, np.ndarray]:
    params = {}
    for name, shape in param_schema(spec).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "scale":
            arr = np.ones(shape, dtype)
        elif leaf in ("shift", "class_token") or (leaf == "bias" and "lstm" not in name):
            arr = np.zeros(shape, dtype)
        elif "lstm" in name:
            if leaf == "bias":
                units = shape[0] // 4
                arr = np.zeros(shape, dtype)
                arr[units:2 * units] = 1.0
            else:
                limit = 1.0 / np.sqrt(shape[0])
                arr = rng.uniform(-limit, limit, shape).astype(dtype)
        else:
            arr = _trunc_normal(rng, shape, 0.02, dtype)
        params[name] = arr
    return params


def init_buffers(spec: ModelSpec, dtype=np.float32) -> dict[str, np.ndarray]:
    out = {}
    for name, shape in buffer_schema(spec).items():
        fill = 1.0 if name.endswith("running_var") else 0.0
        out[name] = np.full(shape, fill, dtype)
    return out


def validate(arrays: dict[str, np.ndarray], schema: dict[str, tuple[int, ...]], what: str = "parameter") -> None:
    missing = sorted(set(schema) - set(arrays))
    extra = sorted(set(arrays) - set(schema))
    if missing or extra:
        raise SchemaError(f"{what} names differ from schema: missing={missing[:5]} extra={extra[:5]}")
    for name, shape in schema.items():
        if tuple(arrays[name].shape) != tuple(shape):
            raise SchemaError(f"{what} {name!r} has shape {arrays[name].shape}, schema wants {shape}")
