"""8-bit PNG / PPM / PGM reading and writing."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from agu.errors import InvalidInputError

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm", ".pnm")


def read_image(path) -> np.ndarray:
    """Load an 8-bit image as float64.

    Grayscale files give an ``(H, W)`` plane, everything else is converted
    to RGB and returned as ``(H, W, 3)``.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("L", "1", "I;16", "I"):
                arr = np.asarray(im.convert("L"))
            else:
                arr = np.asarray(im.convert("RGB"))
    except (OSError, UnidentifiedImageError) as exc:
        raise InvalidInputError(f"cannot read image {path}: {exc}") from exc
    return arr.astype(np.float64)


def to_uint8(img) -> np.ndarray:
    """Round half-up and clamp to 8-bit."""
    a = np.asarray(img, dtype=np.float64)
    return np.clip(np.floor(a + 0.5), 0, 255).astype(np.uint8)


def write_image(path, img) -> None:
    """Save a plane or RGB image; the format follows the file suffix."""
    path = Path(path)
    data = to_uint8(img)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[..., 0]
    if data.ndim not in (2, 3):
        raise InvalidInputError(f"cannot write array of shape {data.shape}")
    suffix = path.suffix.lower()
    if suffix == ".pgm" and data.ndim == 3:
        raise InvalidInputError("PGM output needs a single-channel image")
    if suffix == ".ppm" and data.ndim == 2:
        data = np.repeat(data[..., None], 3, axis=2)
    fmt = {".png": "PNG", ".ppm": "PPM", ".pgm": "PPM", ".pnm": "PPM"}.get(suffix)
    if fmt is None:
        raise InvalidInputError(f"unsupported image suffix {suffix!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(data).save(path, format=fmt)


def list_images(directory) -> list[Path]:
    d = Path(directory)
    return sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def false_color(labels: np.ndarray, n_classes: int) -> np.ndarray:
    """Map a class-index raster to RGB for visual inspection.

    Classes below the center go blue, above go red, the center class is black.
    """
    center = (n_classes - 1) / 2.0
    t = (labels.astype(np.float64) - center) / center
    rgb = np.zeros(labels.shape + (3,))
    rgb[..., 0] = np.clip(t, 0, 1) * 255.0
    rgb[..., 2] = np.clip(-t, 0, 1) * 255.0
    rgb[..., 1] = (1.0 - np.abs(t)) ** 4 * 64.0
    return rgb
