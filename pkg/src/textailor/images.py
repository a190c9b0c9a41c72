"""PNG import/export for float RGB images and label maps."""

from __future__ import annotations

import numpy as np
from PIL import Image

__all__ = ["save_png", "load_png", "downsample", "upsample"]


def save_png(image: np.ndarray, path) -> None:
    """Write a float [0,1] (H, W, 3) array or uint8 array as 8-bit RGB PNG."""
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = (np.clip(arr, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def load_png(path) -> np.ndarray:
    """Read an RGB PNG into a float array in [0, 1]."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def downsample(image: np.ndarray, factor: int) -> np.ndarray:
    """Average-pool an (H, W, C) or (H, W) array by an integer factor."""
    arr = np.asarray(image, dtype=np.float64)
    h, w = arr.shape[:2]
    if h % factor or w % factor:
        raise ValueError(f"image size {arr.shape[:2]} not divisible by {factor}")
    if arr.ndim == 2:
        return arr.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))
    return arr.reshape(h // factor, factor, w // factor, factor, -1).mean(axis=(1, 3))


def upsample(image: np.ndarray, factor: int) -> np.ndarray:
    """Nearest-neighbor upsample, the inverse layout of :func:`downsample`."""
    arr = np.asarray(image, dtype=np.float64)
    return arr.repeat(factor, axis=0).repeat(factor, axis=1)
