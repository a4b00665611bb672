"""Atomic file IO for PNG images and JSON records.

Every write goes through write-temp-then-rename so a failed run never
leaves a truncated output behind.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str | Path, obj) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    atomic_write_bytes(path, text.encode("utf-8"))


def read_json(path: str | Path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _png_bytes(img: Image.Image) -> bytes:
    import io

    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def save_rgb_png(path: str | Path, image_u8: np.ndarray) -> None:
    arr = np.asarray(image_u8, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) uint8 image, got {arr.shape}")
    atomic_write_bytes(path, _png_bytes(Image.fromarray(arr, mode="RGB")))


def load_rgb_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def save_gray_png(path: str | Path, gray_u8: np.ndarray) -> None:
    arr = np.asarray(gray_u8, dtype=np.uint8)
    if arr.ndim != 2:
        raise ValueError(f"expected (H, W) uint8 image, got {arr.shape}")
    atomic_write_bytes(path, _png_bytes(Image.fromarray(arr, mode="L")))


def load_mask_png(path: str | Path) -> np.ndarray:
    """Load a grayscale mask PNG as a {0,1} uint8 grid (nonzero means edit)."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"), dtype=np.uint8)
    return (arr > 127).astype(np.uint8)
