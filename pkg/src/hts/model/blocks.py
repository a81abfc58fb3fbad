"""The three architectural blocks: attention encoder, hybrid sequencer, dense head.

Every block works on a batch (leading axis B) and takes parameters as a
mapping ``name -> Tensor``; names follow :func:`hts.model.params.param_schema`.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from ..numeric import tensor as T
from ..numeric.tensor import Tensor
from .config import EncoderConfig, ModelSpec, PatchConfig, SequencerConfig

Params = Mapping[str, Tensor]


class StateError(RuntimeError):
    """Inference requested before running statistics exist."""


def extract_patches(images: np.ndarray | Tensor, cfg: PatchConfig) -> Tensor:
    """B x H x W x C -> B x N x (P*P*C), patches in row-major grid order.

    Each patch is flattened row-major over (row, col, channel), i.e. patch
    (r, c) equals ``img[r*P:(r+1)*P, c*P:(c+1)*P, :].reshape(-1)``.
    """
    x = T.as_tensor(images)
    if x.ndim == 3:
        x = T.reshape(x, (1,) + x.shape)
    b, h, w, c = x.shape
    if (h, w, c) != (cfg.height, cfg.width, cfg.channels):
        raise ValueError(f"image shape {(h, w, c)} does not match config {(cfg.height, cfg.width, cfg.channels)}")
    p = cfg.patch
    gh, gw = cfg.grid
    x = T.reshape(x, (b, gh, p, gw, p, c))
    x = T.transpose(x, (0, 1, 3, 2, 4, 5))
    return T.reshape(x, (b, gh * gw, p * p * c))


def embed_patches(images, cfg: PatchConfig, enc: EncoderConfig, params: Params) -> Tensor:
    """Project flattened patches to width D, prepend class token, add positions."""
    patches = extract_patches(images, cfg)
    tokens = patches @ params["embed.patch.weight"] + params["embed.patch.bias"]
    if enc.include_class_token:
        b = tokens.shape[0]
        cls = params["embed.class_token"]
        cls = T.mul(T.reshape(cls, (1, 1, cfg.dim)), np.ones((b, 1, 1), dtype=cls.dtype))
        tokens = T.concat([cls, tokens], axis=1)
    return tokens + params["embed.position"]


def layer_norm(x: Tensor, scale: Tensor, shift: Tensor, eps: float = 1e-6) -> Tensor:
    mu = T.mean(x, axis=-1, keepdims=True)
    xc = x - mu
    var = T.mean(xc * xc, axis=-1, keepdims=True)
    return xc / T.sqrt(var + eps) * scale + shift


def self_attention(tokens: Tensor, params: Params, prefix: str, heads: int,
                   return_weights: bool = False):
    """Multi-head scaled dot-product self-attention over B x T x D tokens."""
    b, t, d = tokens.shape
    if d % heads:
        raise ValueError(f"{heads} heads do not divide width {d}")
    dk = d // heads

    def split(x):
        return T.transpose(T.reshape(x, (b, t, heads, dk)), (0, 2, 1, 3))

    q = split(tokens @ params[f"{prefix}.query.weight"] + params[f"{prefix}.query.bias"])
    k = split(tokens @ params[f"{prefix}.key.weight"])
    v = split(tokens @ params[f"{prefix}.value.weight"] + params[f"{prefix}.value.bias"])
    scores = T.matmul(q, T.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(dk))
    weights = T.softmax(scores, axis=-1)
    ctx = T.reshape(T.transpose(T.matmul(weights, v), (0, 2, 1, 3)), (b, t, d))
    out = ctx @ params[f"{prefix}.out.weight"] + params[f"{prefix}.out.bias"]
    return (out, weights) if return_weights else out


def mlp(x: Tensor, params: Params, prefix: str) -> Tensor:
    hidden = T.gelu(x @ params[f"{prefix}.fc1.weight"] + params[f"{prefix}.fc1.bias"])
    return hidden @ params[f"{prefix}.fc2.weight"] + params[f"{prefix}.fc2.bias"]


def encoder_block(tokens: Tensor, params: Params, index: int, cfg: EncoderConfig,
                  attention_sink: list | None = None) -> Tensor:
    pre = f"encoder.{index}"
    normed = layer_norm(tokens, params[f"{pre}.ln1.scale"], params[f"{pre}.ln1.shift"], cfg.ln_eps)
    attn, weights = self_attention(normed, params, f"{pre}.attn", cfg.heads, return_weights=True)
    if attention_sink is not None:
        attention_sink.append(weights.data)
    x = tokens + attn
    normed = layer_norm(x, params[f"{pre}.ln2.scale"], params[f"{pre}.ln2.shift"], cfg.ln_eps)
    return x + mlp(normed, params, f"{pre}.mlp")


def encode(tokens: Tensor, params: Params, cfg: EncoderConfig,
           attention_sink: list | None = None) -> Tensor:
    """Encoder stack followed by the final layer norm."""
    for i in range(cfg.layers):
        tokens = encoder_block(tokens, params, i, cfg, attention_sink)
    return layer_norm(tokens, params["encoder.norm.scale"], params["encoder.norm.shift"], cfg.ln_eps)


def batch_norm(x: Tensor, scale: Tensor, shift: Tensor, mode: str,
               stats: dict[str, np.ndarray] | None, prefix: str = "",
               momentum: float = 0.99, eps: float = 1e-5) -> Tensor:
    """Per-feature normalization over every axis but the last.

    In ``train`` mode batch statistics are used and ``stats`` (if given) is
    updated in place: the first update copies the batch statistics, later
    ones take an exponential average with ``momentum``.
    """
    axes = tuple(range(x.ndim - 1))
    mean_key, var_key, n_key = (f"{prefix}running_mean", f"{prefix}running_var", f"{prefix}updates")
    if mode == "train":
        mu = T.mean(x, axis=axes)
        xc = x - mu
        var = T.mean(xc * xc, axis=axes)
        if stats is not None:
            if stats[n_key][0] == 0:
                stats[mean_key][...] = mu.data
                stats[var_key][...] = var.data
            else:
                stats[mean_key] *= momentum
                stats[mean_key] += (1.0 - momentum) * mu.data
                stats[var_key] *= momentum
                stats[var_key] += (1.0 - momentum) * var.data
            stats[n_key] += 1
        normed = xc / T.sqrt(var + eps)
    elif mode == "infer":
        if stats is None or mean_key not in stats or var_key not in stats:
            raise StateError(f"batch norm {prefix or '<anon>'} has no running statistics")
        mu = stats[mean_key].astype(x.dtype, copy=False)
        sd = np.sqrt(stats[var_key] + eps).astype(x.dtype, copy=False)
        normed = (x - mu) / sd
    else:
        raise ValueError(f"unknown batch-norm mode {mode!r}")
    return normed * scale + shift


def _lstm_direction(xw: Tensor, w_rec: Tensor, units: int, reverse: bool) -> list[Tensor]:
    """Run one direction; ``xw`` already holds x_t @ W_in + b for every step."""
    steps = xw.shape[1]
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    h = c = None
    out: list[Tensor | None] = [None] * steps
    u = units
    for t in order:
        z = xw[:, t]
        if h is not None:
            z = z + h @ w_rec
        i = T.sigmoid(z[:, :u])
        f = T.sigmoid(z[:, u:2 * u])
        g = T.tanh(z[:, 2 * u:3 * u])
        o = T.sigmoid(z[:, 3 * u:])
        c = i * g if c is None else f * c + i * g
        h = o * T.tanh(c)
        out[t] = h
    return out


def bilstm(seq: Tensor, params: Params, prefix: str, units: int) -> Tensor:
    """Bidirectional LSTM over B x T x F; returns B x T x 2U (forward | backward).

    Gates: input/forget/output sigmoid, candidate tanh, zero initial state.
    """
    if seq.shape[1] < 1:
        raise ValueError("bilstm needs at least one time step")
    halves = []
    for direction, reverse in (("fwd", False), ("bwd", True)):
        xw = seq @ params[f"{prefix}.{direction}.input_weight"] + params[f"{prefix}.{direction}.bias"]
        halves.append(T.stack(_lstm_direction(
            xw, params[f"{prefix}.{direction}.recurrent_weight"], units, reverse), axis=1))
    return T.concat(halves, axis=-1)


def hybrid_sequencer(tokens: Tensor, cfg: SequencerConfig, params: Params, mode: str,
                     stats: dict[str, np.ndarray] | None) -> Tensor:
    """BN -> BiLSTM(units1) -> BN -> BiLSTM(units2) with concatenation skips.

    level 1 = [tokens, lstm1]           -> second BN/BiLSTM
    level 2 = [tokens, lstm1, lstm2]    -> mean over time
    Output width is D + 2*units1 + 2*units2.
    """
    x = batch_norm(tokens, params["sequencer.bn1.scale"], params["sequencer.bn1.shift"], mode,
                   stats, "sequencer.bn1.", cfg.momentum, cfg.epsilon_bn)
    out1 = bilstm(x, params, "sequencer.lstm1", cfg.units1)
    level1 = T.concat([tokens, out1], axis=-1)
    x = batch_norm(level1, params["sequencer.bn2.scale"], params["sequencer.bn2.shift"], mode,
                   stats, "sequencer.bn2.", cfg.momentum, cfg.epsilon_bn)
    out2 = bilstm(x, params, "sequencer.lstm2", cfg.units2)
    level2 = T.concat([level1, out2], axis=-1)
    return T.mean(level2, axis=1)


def head_logits(features: Tensor, params: Params) -> Tensor:
    return features @ params["head.weight"] + params["head.bias"]


def prediction_head(features: Tensor, params: Params, task: str) -> Tensor:
    """Softmax over 8 age groups, or sigmoid P(male) for the gender task."""
    logits = head_logits(features, params)
    return probabilities(logits, task)


def probabilities(logits: Tensor, task: str) -> Tensor:
    if task == "age8":
        return T.softmax(logits, axis=-1)
    if task == "gender2":
        return T.sigmoid(logits)
    raise ValueError(f"unknown task {task!r}")


def sequence_tokens(encoded: Tensor, spec: ModelSpec) -> Tensor:
    """Drop the class token (if any) before the sequencer."""
    return encoded[:, 1:] if spec.encoder.include_class_token else encoded
