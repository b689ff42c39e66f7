"""Lossless raster image IO; pixels map to float64 in [0, 1]."""

from __future__ import annotations

import os

import numpy as np
from PIL import Image


class ImageIOError(IOError):
    """File could not be decoded or written."""


def load_image(path: str) -> np.ndarray:
    """Read an 8- or 16-bit image as float64 in [0, 1]; (H, W) or (H, W, 3)."""
    try:
        with Image.open(path) as img:
            if img.mode in ("I;16", "I;16B", "I"):
                arr = np.asarray(img, dtype=np.float64) / 65535.0
            else:
                if img.mode not in ("L", "RGB"):
                    img = img.convert("RGB") if "A" in img.mode or img.mode == "P" else img.convert("L")
                arr = np.asarray(img, dtype=np.float64) / 255.0
    except (OSError, SyntaxError, ValueError) as exc:
        raise ImageIOError(f"cannot decode image {path}: {exc}") from exc
    return arr


def save_image(path: str, image: np.ndarray):
    """Write a float image in [0, 1] as 8-bit PNG/etc., atomically."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    data = np.round(arr * 255.0).astype(np.uint8)
    mode = "L" if data.ndim == 2 else "RGB"
    tmp = path + ".tmp"
    try:
        Image.fromarray(data, mode=mode).save(tmp, format=_format_for(path))
        os.replace(tmp, path)
    except (OSError, ValueError) as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise ImageIOError(f"cannot write image {path}: {exc}") from exc


def _format_for(path: str):
    ext = os.path.splitext(path)[1].lower()
    return {"": "PNG", ".png": "PNG", ".bmp": "BMP", ".tif": "TIFF", ".tiff": "TIFF",
            ".ppm": "PPM", ".pgm": "PPM"}.get(ext, None)
