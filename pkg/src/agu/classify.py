"""Per-pixel class maps that index the lookup tables.

Edge classes bin the LoG response of the (bilateral-prefiltered) guide;
brightness classes bin the difference between the enhanced input and the
guide. Both use a fixed symmetric range so a class index means the same
thing on every image, with the center class ``(N - 1) / 2`` at zero.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from agu.errors import InvalidConfigError, InvalidInputError
from agu.imaging import KernelConfig, as_plane, bilateral_filter, log_response

BRIGHTNESS_RANGE = 255.0


@dataclass(frozen=True)
class ClassConfig:
    n_classes: int = 121
    clamp_log: float = 32.0

    def __post_init__(self):
        if int(self.n_classes) != self.n_classes or self.n_classes < 3 or self.n_classes % 2 == 0:
            raise InvalidConfigError(f"n_classes must be odd and >= 3, got {self.n_classes}")
        if not (math.isfinite(self.clamp_log) and self.clamp_log > 0):
            raise InvalidConfigError(f"clamp_log must be > 0, got {self.clamp_log}")

    @property
    def center(self) -> int:
        return (self.n_classes - 1) // 2

    def to_dict(self) -> dict:
        return asdict(self)


def bin_symmetric(values: np.ndarray, bound: float, n_classes: int) -> np.ndarray:
    """Linearly bin ``[-bound, bound]`` into ``n_classes`` integer labels."""
    width = 2.0 * bound / n_classes
    v = np.clip(values, -bound, bound)
    labels = np.floor((v + bound) / width).astype(np.intp)
    return np.clip(labels, 0, n_classes - 1)


def edge_classes(
    guide, kcfg: KernelConfig = KernelConfig(), ccfg: ClassConfig = ClassConfig()
) -> np.ndarray:
    """Edge class of every pixel of a grayscale guide.

    bilateral filter -> LoG -> clamp to ``+-clamp_log`` -> linear binning.
    """
    g = as_plane(guide, "guide")
    resp = log_response(bilateral_filter(g, kcfg), kcfg)
    return bin_symmetric(resp, ccfg.clamp_log, ccfg.n_classes)


def brightness_classes(enhanced, guide, ccfg: ClassConfig = ClassConfig()) -> np.ndarray:
    """Brightness class from ``enhanced - guide`` over the fixed ``+-255`` range."""
    e = as_plane(enhanced, "enhanced")
    g = as_plane(guide, "guide")
    if e.shape != g.shape:
        raise InvalidInputError(f"dimension mismatch: enhanced {e.shape} vs guide {g.shape}")
    return bin_symmetric(e - g, BRIGHTNESS_RANGE, ccfg.n_classes)
