"""Binary PGM/PPM image files -- codec-free and byte-exact.

Single-channel images go to P5, three-channel to P6, maxval 255.  Values in
[-1, 1] map through the shared byte normalization, so write/read round-trips
are exact for byte-quantized data.
"""

from __future__ import annotations

import re

import numpy as np

from .data import denormalize_bytes, normalize_bytes


def write_image(path, img: np.ndarray) -> None:
    """Write (H,W), (1,H,W) as PGM or (3,H,W) as PPM; values in [-1, 1]."""
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[None]
    if img.ndim != 3 or img.shape[0] not in (1, 3):
        raise ValueError(f"cannot write image of shape {img.shape}")
    c, h, w = img.shape
    magic = b"P5" if c == 1 else b"P6"
    # Interleave channels pixel-wise (PPM is RGBRGB...).
    raster = denormalize_bytes(img).transpose(1, 2, 0).tobytes()
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(raster)


def read_image(path) -> np.ndarray:
    """Read a binary PGM/PPM into a (C,H,W) float32 array in [-1, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    m = re.match(rb"(P[56])\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if not m:
        raise ValueError(f"{path}: not a binary PGM/PPM")
    magic, w, h, maxval = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4))
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
    c = 1 if magic == b"P5" else 3
    data = np.frombuffer(raw, dtype=np.uint8, count=c * h * w, offset=m.end())
    if data.size != c * h * w:
        raise ValueError(f"{path}: raster truncated")
    return normalize_bytes(data.reshape(h, w, c).transpose(2, 0, 1))
