"""Image codecs (binary PPM and HTST tensors) and bilinear resizing."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..numeric.io import load_tensor, save_tensor


class ImageFormatError(ValueError):
    """Unsupported or corrupt image file."""


def _ppm_tokens(raw: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PPM header")
        tokens.append(raw[start:pos])
    return tokens, pos + 1  # one whitespace byte separates header and raster


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _ppm_tokens(raw, 4)
    if magic != b"P6":
        raise ImageFormatError(f"{path}: only binary PPM (P6) is supported")
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval > 255:
        raise ImageFormatError(f"{path}: 16-bit PPM not supported")
    if len(raw) - pos < w * h * 3:
        raise ImageFormatError(f"{path}: truncated PPM raster")
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h * 3, offset=pos)
    return data.reshape(h, w, 3).copy()


def write_ppm(path, img: np.ndarray) -> None:
    arr = np.clip(np.rint(np.asarray(img, dtype=np.float64)), 0, 255).astype(np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ImageFormatError(f"PPM needs an H x W x 3 image, got {arr.shape}")
    h, w, _ = arr.shape
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(arr.tobytes())


def read_image(path) -> np.ndarray:
    """H x W x C float32 array of 0-255 intensities."""
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pnm"):
        return read_ppm(path).astype(np.float32)
    if path.suffix.lower() in (".htst", ".bin"):
        arr = load_tensor(path)
        if arr.ndim != 3:
            raise ImageFormatError(f"{path}: tensor image must be rank 3, got {arr.shape}")
        return arr.astype(np.float32)
    raise ImageFormatError(f"{path}: unsupported image format {path.suffix!r}; convert to PPM")


def write_image(path, img: np.ndarray) -> None:
    path = Path(path)
    if path.suffix.lower() in (".htst", ".bin"):
        save_tensor(path, np.asarray(img, dtype=np.float32))
    else:
        write_ppm(path, img)


def resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Half-pixel-centred bilinear resampling with edge clamping."""
    h, w = img.shape[:2]
    if (h, w) == (height, width):
        return img.astype(np.float32, copy=True)

    def coords(n_out, n_in):
        x = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        x = np.clip(x, 0, n_in - 1)
        lo = np.floor(x).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, (x - lo).astype(np.float32)

    y0, y1, fy = coords(height, h)
    x0, x1, fx = coords(width, w)
    src = img.astype(np.float32)
    top = src[y0][:, x0] * (1 - fx)[None, :, None] + src[y0][:, x1] * fx[None, :, None]
    bot = src[y1][:, x0] * (1 - fx)[None, :, None] + src[y1][:, x1] * fx[None, :, None]
    return top * (1 - fy)[:, None, None] + bot * fy[:, None, None]
