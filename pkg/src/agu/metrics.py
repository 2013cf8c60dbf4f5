"""Image quality metrics: noise, sharpness, PSNR and SSIM.

Color inputs are measured on their BT.601 luma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from agu.errors import InvalidInputError
from agu.imaging import KernelConfig, log_response, to_gray

_IMMERKAER = np.array([[1.0, -2.0, 1.0], [-2.0, 4.0, -2.0], [1.0, -2.0, 1.0]])

SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_SIGMA = 1.5
SSIM_WIN = 11
DATA_RANGE = 255.0


@dataclass
class MetricsReport:
    sharpness: float
    noise: float
    psnr: float = math.nan
    ssim: float = math.nan

    def as_row(self) -> dict:
        return {
            "sharpness": self.sharpness,
            "noise": self.noise,
            "psnr": self.psnr,
            "ssim": self.ssim,
        }


def noise_estimate(img) -> float:
    """Immerkaer's fast estimate of the Gaussian noise standard deviation."""
    a = to_gray(img)
    h, w = a.shape
    if h < 3 or w < 3:
        raise InvalidInputError(f"noise estimate needs at least 3x3 pixels, got {w}x{h}")
    resp = ndimage.correlate(a, _IMMERKAER, mode="nearest")[1:-1, 1:-1]
    return float(math.sqrt(math.pi / 2.0) * np.abs(resp).sum() / (6.0 * (w - 2) * (h - 2)))


def sharpness(img, kcfg: KernelConfig = KernelConfig()) -> float:
    """Mean absolute LoG response over pixels whose kernel fits inside the image."""
    a = to_gray(img)
    resp = np.abs(log_response(a, kcfg))
    m = kcfg.log_size // 2
    inner = resp[m : a.shape[0] - m, m : a.shape[1] - m]
    if inner.size == 0:
        inner = resp
    return float(inner.mean())


def _pair(a, b):
    x, y = to_gray(a), to_gray(b)
    if x.shape != y.shape:
        raise InvalidInputError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return x, y


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    x, y = _pair(a, b)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(DATA_RANGE**2 / mse)


def _gaussian_window() -> np.ndarray:
    h = SSIM_WIN // 2
    t = np.arange(-h, h + 1, dtype=np.float64)
    g = np.exp(-(t * t) / (2.0 * SSIM_SIGMA**2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a, b) -> float:
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Local statistics use reflected borders; the mean is taken over pixels at
    least five pixels from the border when the image is large enough.
    """
    x, y = _pair(a, b)
    win = _gaussian_window()

    def filt(z):
        return ndimage.correlate(z, win, mode="reflect")

    c1 = (SSIM_K1 * DATA_RANGE) ** 2
    c2 = (SSIM_K2 * DATA_RANGE) ** 2
    mx, my = filt(x), filt(y)
    vx = filt(x * x) - mx * mx
    vy = filt(y * y) - my * my
    cxy = filt(x * y) - mx * my
    smap = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    p = SSIM_WIN // 2
    if smap.shape[0] > 2 * p and smap.shape[1] > 2 * p:
        smap = smap[p:-p, p:-p]
    return float(smap.mean())


def measure(img, reference=None, kcfg: KernelConfig = KernelConfig()) -> MetricsReport:
    """All four metrics; PSNR/SSIM only when a reference is supplied."""
    rep = MetricsReport(sharpness=sharpness(img, kcfg), noise=noise_estimate(img))
    if reference is not None:
        rep.psnr = psnr(img, reference)
        rep.ssim = ssim(img, reference)
    return rep
