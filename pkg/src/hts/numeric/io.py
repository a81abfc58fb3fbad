"""HTST binary tensor format.

Layout (little-endian): magic ``HTST``, version u16, rank u16, rank x u64
extents, dtype tag u8 (1 = f32, 2 = f64), raw elements in row-major order.
"""

from __future__ import annotations

import io
import os
import struct
import tempfile
from pathlib import Path
from typing import BinaryIO

import numpy as np

MAGIC = b"HTST"
VERSION = 1
_TAGS = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


class TensorFormatError(ValueError):
    """Stream is not a valid HTST tensor."""


def write_tensor(stream: BinaryIO, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    dt = arr.dtype.newbyteorder("<")
    if dt not in _TAGS:
        raise TypeError(f"unsupported dtype {arr.dtype}; expected float32 or float64")
    stream.write(MAGIC)
    stream.write(struct.pack("<HH", VERSION, arr.ndim))
    stream.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    stream.write(struct.pack("<B", _TAGS[dt]))
    stream.write(np.ascontiguousarray(arr, dtype=dt).tobytes())


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    buf = stream.read(n)
    if len(buf) != n:
        raise TensorFormatError(f"truncated tensor: wanted {n} bytes, got {len(buf)}")
    return buf


def read_tensor(stream: BinaryIO) -> np.ndarray:
    if _read_exact(stream, 4) != MAGIC:
        raise TensorFormatError("bad magic, not an HTST tensor")
    version, rank = struct.unpack("<HH", _read_exact(stream, 4))
    if version != VERSION:
        raise TensorFormatError(f"unsupported tensor version {version}")
    shape = struct.unpack(f"<{rank}Q", _read_exact(stream, 8 * rank))
    (tag,) = struct.unpack("<B", _read_exact(stream, 1))
    if tag not in _DTYPES:
        raise TensorFormatError(f"unknown dtype tag {tag}")
    dt = _DTYPES[tag]
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    raw = _read_exact(stream, count * dt.itemsize)
    return np.frombuffer(raw, dtype=dt).reshape(shape).astype(dt.newbyteorder("="))


def tensor_to_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    write_tensor(buf, arr)
    return buf.getvalue()


def tensor_from_bytes(raw: bytes) -> np.ndarray:
    buf = io.BytesIO(raw)
    arr = read_tensor(buf)
    if buf.read(1):
        raise TensorFormatError("trailing bytes after tensor")
    return arr


def save_tensor(path, arr: np.ndarray) -> None:
    with open(path, "wb") as fh:
        write_tensor(fh, arr)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return tensor_from_bytes(fh.read())


def atomic_write(path, data: bytes) -> None:
    """Write via a temp file and rename, so readers never see a partial file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        mask = os.umask(0)
        os.umask(mask)
        os.chmod(tmp, 0o666 & ~mask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
