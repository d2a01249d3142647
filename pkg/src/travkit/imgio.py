"""Grayscale/RGB image file helpers (8-bit PGM/PNG in, PNG out)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def read_gray(path: str | Path) -> np.ndarray:
    """Read an 8-bit grayscale image (PGM or PNG) as (H, W) uint8."""
    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=np.uint8)


def write_gray8(path: str | Path, image: np.ndarray) -> None:
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="L").save(path)


def write_gray16(path: str | Path, image: np.ndarray) -> None:
    """Write a (H, W) uint16 array as 16-bit grayscale PNG."""
    arr = np.asarray(image, dtype=np.uint16)
    Image.fromarray(arr).save(path)


def read_gray16(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img, dtype=np.uint16)


def write_rgb(path: str | Path, image: np.ndarray) -> None:
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(path)
