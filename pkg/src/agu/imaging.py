"""Raster primitives shared by every other module.

Images are plain numpy arrays: a plane is ``(H, W)`` float64, a color image
is ``(H, W, 3)`` float64 in RGB order. Intensities live in ``[0, 255]``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from agu.errors import InvalidConfigError, InvalidInputError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class KernelConfig:
    """Filter geometry shared by classification, filtering and metrics.

    Attributes:
        radius: Guided-filter window radius ``k`` (window is ``2k+1`` wide).
        log_sigma: Scale of the Laplacian-of-Gaussian kernel.
        log_size: Odd side length of the sampled LoG kernel.
        bilateral_sigma_spatial: Spatial Gaussian sigma of the bilateral prefilter.
        bilateral_sigma_range: Range Gaussian sigma, in intensity units.
    """

    radius: int = 3
    log_sigma: float = 1.0
    log_size: int = 7
    bilateral_sigma_spatial: float = 1.0
    bilateral_sigma_range: float = 20.0

    def __post_init__(self):
        if int(self.radius) != self.radius or self.radius < 1:
            raise InvalidConfigError(f"radius must be an integer >= 1, got {self.radius}")
        if int(self.log_size) != self.log_size or self.log_size < 3 or self.log_size % 2 == 0:
            raise InvalidConfigError(f"log_size must be odd and >= 3, got {self.log_size}")
        for name in ("log_sigma", "bilateral_sigma_spatial", "bilateral_sigma_range"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidConfigError(f"{name} must be > 0, got {v}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "KernelConfig":
        return cls(
            radius=int(d["radius"]),
            log_sigma=float(d["log_sigma"]),
            log_size=int(d["log_size"]),
            bilateral_sigma_spatial=float(d["bilateral_sigma_spatial"]),
            bilateral_sigma_range=float(d["bilateral_sigma_range"]),
        )


def as_plane(img, name: str = "image") -> np.ndarray:
    """Validate and convert ``img`` to a finite 2-D float64 plane."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidInputError(f"{name} must be a 2-D plane, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise InvalidInputError(f"{name} has a zero dimension: {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return a


def as_color(img, name: str = "image") -> np.ndarray:
    """Validate and convert ``img`` to an ``(H, W, 3)`` float64 array."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 3 or a.shape[2] != 3:
        raise InvalidInputError(f"{name} must have shape (H, W, 3), got {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise InvalidInputError(f"{name} has a zero dimension: {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return a


def clamp(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 255.0)


def box_mean(img, radius: int) -> np.ndarray:
    """Mean over the ``(2r+1)^2`` window around every pixel.

    Windows are truncated at the border and renormalized by the number of
    pixels actually covered. Runs in O(1) per pixel using a summed-area table.

    Args:
        img: 2-D array. Not clamped; signed coefficient planes are allowed.
        radius: Window radius, >= 1.

    Returns:
        Array of the same shape holding the window means.
    """
    a = as_plane(img)
    if int(radius) != radius or radius < 1:
        raise InvalidInputError(f"radius must be an integer >= 1, got {radius}")
    return window_sum(a, int(radius)) / window_count(a.shape, int(radius))


def _bounds(n: int, r: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(n)
    return np.maximum(idx - r, 0), np.minimum(idx + r + 1, n)


def window_sum(a: np.ndarray, r: int) -> np.ndarray:
    """Truncated-window sums via a summed-area table (no renormalization)."""
    h, w = a.shape
    sat = np.zeros((h + 1, w + 1))
    sat[1:, 1:] = a.cumsum(axis=0).cumsum(axis=1)
    y0, y1 = _bounds(h, r)
    x0, x1 = _bounds(w, r)
    return (
        sat[np.ix_(y1, x1)] - sat[np.ix_(y0, x1)] - sat[np.ix_(y1, x0)] + sat[np.ix_(y0, x0)]
    )


def window_count(shape: tuple[int, int], r: int) -> np.ndarray:
    y0, y1 = _bounds(shape[0], r)
    x0, x1 = _bounds(shape[1], r)
    return np.outer(y1 - y0, x1 - x0).astype(np.float64)


def box_mean_adjoint(g: np.ndarray, r: int) -> np.ndarray:
    """Transpose of :func:`box_mean` as a linear map (used for gradients)."""
    return window_sum(g / window_count(g.shape, r), r)


def _axis_weights(n_in: int, n_out: int):
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_linear(a: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resampling without clamping (for signed coefficient planes)."""
    h, w = a.shape
    if out_w < 1 or out_h < 1:
        raise InvalidInputError(f"target dimensions must be >= 1, got {out_w}x{out_h}")
    if (out_h, out_w) == (h, w):
        return a.copy()
    y0, y1, wy = _axis_weights(h, out_h)
    x0, x1, wx = _axis_weights(w, out_w)
    rows = a[y0] * (1.0 - wy)[:, None] + a[y1] * wy[:, None]
    return rows[:, x0] * (1.0 - wx) + rows[:, x1] * wx


def resize_linear_adjoint(g: np.ndarray, in_w: int, in_h: int) -> np.ndarray:
    """Transpose of :func:`resize_linear` mapping output-space gradients back."""
    out_h, out_w = g.shape
    if (out_h, out_w) == (in_h, in_w):
        return g.copy()
    y0, y1, wy = _axis_weights(in_h, out_h)
    x0, x1, wx = _axis_weights(in_w, out_w)
    cols = np.zeros((out_h, in_w))
    for idx, wt in ((x0, 1.0 - wx), (x1, wx)):
        np.add.at(cols.T, idx, (g * wt).T)
    out = np.zeros((in_h, in_w))
    for idx, wt in ((y0, 1.0 - wy), (y1, wy)):
        np.add.at(out, idx, cols * wt[:, None])
    return out


def bilinear_resize(img, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resize with half-pixel-center (align-corners false) mapping.

    Source coordinates are ``(dst + 0.5) * in/out - 0.5`` clamped to the
    border. The result is clamped to ``[0, 255]``.
    """
    a = as_plane(img)
    return clamp(resize_linear(a, int(out_w), int(out_h)))


def downscale(img, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear downscale with a box prefilter when shrinking more than 2x."""
    a = as_plane(img)
    factor = max(a.shape[1] / out_w, a.shape[0] / out_h)
    if factor > 2.0:
        a = box_mean(a, int(factor // 2))
    return clamp(resize_linear(a, int(out_w), int(out_h)))


def nearest_resize(labels: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Nearest-neighbour resampling, used for integer class maps."""
    h, w = labels.shape
    ys = np.minimum(((np.arange(out_h) + 0.5) * h / out_h).astype(np.intp), h - 1)
    xs = np.minimum(((np.arange(out_w) + 0.5) * w / out_w).astype(np.intp), w - 1)
    return labels[np.ix_(ys, xs)]


def log_kernel(sigma: float, size: int) -> np.ndarray:
    """Sampled Laplacian of Gaussian, mean-subtracted so it sums to zero."""
    h = size // 2
    y, x = np.mgrid[-h : h + 1, -h : h + 1].astype(np.float64)
    r2 = (x * x + y * y) / (2.0 * sigma * sigma)
    k = -1.0 / (math.pi * sigma**4) * (1.0 - r2) * np.exp(-r2)
    return k - k.mean()


def log_response(img, cfg: KernelConfig = KernelConfig()) -> np.ndarray:
    """Signed LoG response with edge-replicated borders (not clamped)."""
    a = as_plane(img)
    return ndimage.correlate(a, log_kernel(cfg.log_sigma, cfg.log_size), mode="nearest")


def bilateral_filter(img, cfg: KernelConfig = KernelConfig()) -> np.ndarray:
    """Brute-force bilateral filter with edge-replicated borders.

    The window radius is ``ceil(3 * bilateral_sigma_spatial)``.
    """
    a = as_plane(img)
    r = int(math.ceil(3.0 * cfg.bilateral_sigma_spatial))
    h, w = a.shape
    padded = np.pad(a, r, mode="edge")
    inv_s = 1.0 / (2.0 * cfg.bilateral_sigma_spatial**2)
    inv_r = 1.0 / (2.0 * cfg.bilateral_sigma_range**2)
    num = np.zeros_like(a)
    den = np.zeros_like(a)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            nb = padded[r + dy : r + dy + h, r + dx : r + dx + w]
            d = nb - a
            wt = math.exp(-(dx * dx + dy * dy) * inv_s) * np.exp(-d * d * inv_r)
            num += wt * nb
            den += wt
    return clamp(num / den)


def rgb_to_gray(img) -> np.ndarray:
    """BT.601 luma of an RGB image."""
    a = as_color(img)
    r, g, b = LUMA_WEIGHTS
    return clamp(r * a[..., 0] + g * a[..., 1] + b * a[..., 2])


def to_gray(img) -> np.ndarray:
    """Luma for color input, pass-through for planes."""
    a = np.asarray(img, dtype=np.float64)
    return rgb_to_gray(a) if a.ndim == 3 else as_plane(a)


def stub_enhancer(img, gain: float = 3.0, gamma: float = 2.2) -> np.ndarray:
    """Deterministic brightness lift standing in for a learned enhancer.

    ``out = 255 * (gain * in / 255) ** (1 / gamma)``, clamped per channel.
    """
    if not (gain > 0 and gamma > 0):
        raise InvalidInputError(f"gain and gamma must be > 0, got {gain}, {gamma}")
    a = np.asarray(img, dtype=np.float64)
    lifted = np.clip(gain * a / 255.0, 0.0, None)
    return clamp(255.0 * lifted ** (1.0 / gamma))


def inverse_stub_enhancer(img, gain: float = 3.0, gamma: float = 2.2) -> np.ndarray:
    """Darken an image so that :func:`stub_enhancer` approximately restores it."""
    if not (gain > 0 and gamma > 0):
        raise InvalidInputError(f"gain and gamma must be > 0, got {gain}, {gamma}")
    a = np.clip(np.asarray(img, dtype=np.float64), 0.0, 255.0)
    return clamp(255.0 * (a / 255.0) ** gamma / gain)


def map_channels(fn, img: np.ndarray) -> np.ndarray:
    """Apply a plane function to each channel of a color image."""
    if img.ndim == 2:
        return fn(img)
    return np.stack([fn(img[..., c]) for c in range(img.shape[2])], axis=-1)
