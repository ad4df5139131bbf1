"""8-bit grayscale export (binary PGM)."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def to_gray8(plane) -> np.ndarray:
    """round(255 * clamp(v, 0, 1)) with halves rounded up, so 0.5 -> 128."""
    v = np.clip(np.asarray(plane, dtype=np.float64), 0.0, 1.0)
    return np.floor(255.0 * v + 0.5).astype(np.uint8)


def write_pgm(path, plane) -> None:
    img = to_gray8(plane)
    if img.ndim != 2:
        raise ValueError(f"grayscale export needs a 2-D plane, got shape {img.shape}")
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + img.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported")
    pix = parts[4]
    return np.frombuffer(pix[:w * h], dtype=np.uint8).reshape(h, w)
