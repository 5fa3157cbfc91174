"""Image writers: 8-bit PPM (gamma 2.2), optional PNG, and float dumps.

Float dump layout (little-endian): ``b"RLIT"``, u32 width, u32 height,
u32 channels, then float32 values planar by channel (``C x H x W``).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

__all__ = ["to_srgb8", "write_ppm", "read_ppm", "write_png", "write_image", "write_float", "read_float"]

GAMMA = 2.2
FLOAT_MAGIC = b"RLIT"


def to_srgb8(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=-1)
    v = np.clip(np.nan_to_num(img, nan=0.0), 0.0, 1.0) ** (1.0 / GAMMA)
    return np.round(v * 255.0).astype(np.uint8)


def write_ppm(path, img) -> None:
    rgb = to_srgb8(img)
    h, w = rgb.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(rgb.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read back a P6 file written by :func:`write_ppm` as ``uint8 (H, W, 3)``."""
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while end < len(data) and not data[end:end + 1].isspace():
            end += 1
        if end == pos:
            raise ValueError(f"{path}: truncated PPM header")
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM")
    w, h, maxval = (int(x) for x in fields[1:])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PPM supported")
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos + 1)
    return pixels.reshape(h, w, 3)


def write_png(path, img) -> None:
    from PIL import Image  # optional dependency

    Image.fromarray(to_srgb8(img)).save(path)


def write_image(path, img) -> None:
    """PNG when the suffix says so, PPM otherwise."""
    if str(path).lower().endswith(".png"):
        write_png(path, img)
    else:
        write_ppm(path, img)


def write_float(path, img) -> None:
    arr = np.asarray(img, dtype="<f4")
    if arr.ndim == 2:
        arr = arr[..., None]
    h, w, c = arr.shape
    with open(path, "wb") as fh:
        fh.write(FLOAT_MAGIC + struct.pack("<III", w, h, c))
        fh.write(np.ascontiguousarray(arr.transpose(2, 0, 1)).tobytes())


def read_float(path) -> np.ndarray:
    """Inverse of :func:`write_float`; returns ``(H, W, C)`` float32."""
    data = Path(path).read_bytes()
    if data[:4] != FLOAT_MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}")
    w, h, c = struct.unpack_from("<III", data, 4)
    expected = 16 + 4 * w * h * c
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    arr = np.frombuffer(data, dtype="<f4", offset=16).reshape(c, h, w)
    return arr.transpose(1, 2, 0).copy()
