"""HTSC checkpoint files.

Layout (little-endian)::

    b"HTSC"  u16 version
    u32 header length, UTF-8 ModelSpec text
    u32 tensor count
    per tensor, names sorted: u16 name length, UTF-8 name, HTST tensor

Parameters and batch-norm buffers share one namespace.
"""

from __future__ import annotations

import io
import struct

import numpy as np

from ..model.config import ModelSpec
from ..model.network import Model
from ..model.params import buffer_schema, param_schema, validate
from ..numeric.io import TensorFormatError, atomic_write, read_tensor, write_tensor

MAGIC = b"HTSC"
VERSION = 1


class CheckpointFormatError(ValueError):
    """File is not a readable checkpoint."""


def _dumps(model: Model) -> bytes:
    buf = io.BytesIO()
    header = model.spec.to_text().encode("utf-8")
    buf.write(MAGIC)
    buf.write(struct.pack("<H", VERSION))
    buf.write(struct.pack("<I", len(header)))
    buf.write(header)
    tensors = {**model.params, **model.buffers}
    buf.write(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        write_tensor(buf, tensors[name])
    return buf.getvalue()


def save_checkpoint(model: Model, path) -> None:
    """Write atomically: a reader never sees a half-written file."""
    atomic_write(path, _dumps(model))


def _read(buf: io.BytesIO, n: int) -> bytes:
    out = buf.read(n)
    if len(out) != n:
        raise CheckpointFormatError("truncated checkpoint")
    return out


def load_checkpoint(path, expect: ModelSpec | None = None) -> Model:
    """Read a checkpoint; with ``expect`` the stored tensors must fit that spec's schema.

    Raises :class:`CheckpointFormatError` on corrupt input and
    :class:`~hts.model.params.SchemaError` on a schema mismatch.  Nothing is
    returned unless the whole file parsed.
    """
    with open(path, "rb") as fh:
        buf = io.BytesIO(fh.read())
    if _read(buf, 4) != MAGIC:
        raise CheckpointFormatError("bad magic, not an HTSC checkpoint")
    (version,) = struct.unpack("<H", _read(buf, 2))
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    (hlen,) = struct.unpack("<I", _read(buf, 4))
    try:
        spec = ModelSpec.from_text(_read(buf, hlen).decode("utf-8"))
    except (UnicodeDecodeError, ValueError, TypeError) as exc:
        if isinstance(exc, CheckpointFormatError):
            raise
        raise CheckpointFormatError(f"unreadable model header: {exc}") from exc
    (count,) = struct.unpack("<I", _read(buf, 4))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", _read(buf, 2))
        try:
            name = _read(buf, nlen).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointFormatError(f"unreadable tensor name: {exc}") from exc
        try:
            tensors[name] = read_tensor(buf)
        except TensorFormatError as exc:
            raise CheckpointFormatError(f"tensor {name!r}: {exc}") from exc
    if buf.read(1):
        raise CheckpointFormatError("trailing bytes after last tensor")
    target = expect or spec
    pschema, bschema = param_schema(target), buffer_schema(target)
    params = {k: v for k, v in tensors.items() if k in pschema or k not in bschema}
    buffers = {k: v for k, v in tensors.items() if k in bschema}
    validate(params, pschema)
    validate(buffers, bschema, "buffer")
    return Model(target, params, buffers)
