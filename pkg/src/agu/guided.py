"""Guided-filter coefficients, the sharpening clamp and the AGF/FGF baselines."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import ndimage

from agu.classify import edge_classes
from agu.errors import InvalidInputError, InvalidModelError
from agu.imaging import (
    as_plane,
    box_mean,
    clamp,
    downscale,
    resize_linear,
    to_gray,
)

# below this the window is flat and A is taken as 0
_DEN_FLOOR = 1e-9


class CoeffField(NamedTuple):
    a: np.ndarray
    b: np.ndarray


class WindowStats(NamedTuple):
    mean_g: np.ndarray
    mean_i: np.ndarray
    var_g: np.ndarray
    cov_gi: np.ndarray


def window_stats(inp: np.ndarray, guide: np.ndarray, radius: int) -> WindowStats:
    mean_g = box_mean(guide, radius)
    mean_i = box_mean(inp, radius)
    var_g = np.maximum(box_mean(guide * guide, radius) - mean_g * mean_g, 0.0)
    cov_gi = box_mean(inp * guide, radius) - mean_i * mean_g
    return WindowStats(mean_g, mean_i, var_g, cov_gi)


def raw_coefficients(stats: WindowStats, eps) -> CoeffField:
    den = stats.var_g + eps
    safe = np.where(den > _DEN_FLOOR, den, 1.0)
    a = np.where(den > _DEN_FLOOR, stats.cov_gi / safe, 0.0)
    return CoeffField(a, stats.mean_i - a * stats.mean_g)


def epsilon_field(lut_sigma: np.ndarray, classes: np.ndarray, lam: float) -> np.ndarray:
    """Per-pixel regularizer ``lam * sigma[c] ** 2``."""
    return lam * np.asarray(lut_sigma)[classes] ** 2


def compute_ab(inp, guide, radius: int, eps, smooth: bool = True) -> CoeffField:
    """Closed-form linear coefficients of the guided filter.

    ``A = cov(G, I) / (var(G) + eps)`` and ``B = mean(I) - A mean(G)`` over
    ``(2r+1)^2`` windows; with ``smooth`` both are box-averaged once more.

    Args:
        inp: Plane whose characteristics the coefficients encode.
        guide: Guidance plane of the same size.
        radius: Window radius.
        eps: Scalar or per-pixel non-negative regularizer.
        smooth: Apply the second averaging pass.
    """
    i = as_plane(inp, "input")
    g = as_plane(guide, "guide")
    if i.shape != g.shape:
        raise InvalidInputError(f"dimension mismatch: input {i.shape} vs guide {g.shape}")
    eps = np.asarray(eps, dtype=np.float64)
    if np.any(eps < 0):
        raise InvalidInputError("eps must be non-negative")
    coeff = raw_coefficients(window_stats(i, g, radius), eps)
    if smooth:
        coeff = CoeffField(box_mean(coeff.a, radius), box_mean(coeff.b, radius))
    return coeff


def window_extrema(guide: np.ndarray, radius: int) -> tuple[np.ndarray, np.ndarray]:
    size = 2 * radius + 1
    lo = ndimage.minimum_filter(guide, size=size, mode="nearest")
    hi = ndimage.maximum_filter(guide, size=size, mode="nearest")
    return lo, hi


def clamp_xi(guide, xi, radius: int) -> np.ndarray:
    """Limit a sharpening offset so ``guide + xi`` stays inside the window range.

    Returns the corrected offset ``xi'`` with
    ``min(G, w) <= G + xi' <= max(G, w)`` at every pixel.
    """
    g = as_plane(guide, "guide")
    x = np.asarray(xi, dtype=np.float64)
    if x.shape != g.shape:
        raise InvalidInputError(f"dimension mismatch: xi {x.shape} vs guide {g.shape}")
    lo, hi = window_extrema(g, radius)
    return np.clip(g + x, lo, hi) - g


def _check_model(model) -> None:
    if model is None:
        raise InvalidModelError("no model given")
    for name in ("lut_sigma", "lut_xi"):
        if getattr(model, name, None) is None:
            raise InvalidModelError(f"model is missing {name}")
    model.validate()


def agf_apply(inp, guide, model) -> np.ndarray:
    """Adaptive guided filter at a single resolution.

    ``O = A (G + xi') + B`` with ``eps`` from the sigma table and ``xi`` from
    the xi table, both indexed by the guide's edge classes. Color inputs
    are filtered per channel; classes always come from the guide's luma.
    """
    _check_model(model)
    i = np.asarray(inp, dtype=np.float64)
    g = np.asarray(guide, dtype=np.float64)
    if i.shape != g.shape:
        raise InvalidInputError(f"dimension mismatch: input {i.shape} vs guide {g.shape}")
    r = model.radius
    classes = edge_classes(to_gray(g), model.kernel_cfg, model.class_cfg)
    eps = epsilon_field(model.lut_sigma, classes, model.lam)
    xi = model.lut_xi[classes]

    def one(ip, gp):
        coeff = compute_ab(ip, gp, r, eps)
        return clamp(coeff.a * (gp + clamp_xi(gp, xi, r)) + coeff.b)

    if i.ndim == 2:
        return one(i, g)
    return np.stack([one(i[..., c], g[..., c]) for c in range(i.shape[2])], axis=-1)


def guided_upsample(inp_lr, guide_lr, guide_hr, radius: int, eps) -> np.ndarray:
    """Coefficients from a low-res pair, applied to a high-res guide."""
    coeff = compute_ab(inp_lr, guide_lr, radius, eps)
    h, w = guide_hr.shape
    a = resize_linear(coeff.a, w, h)
    b = resize_linear(coeff.b, w, h)
    return clamp(a * guide_hr + b)


def fgf_apply(inp, guide, radius: int, eps_const: float, subsample: float = 1) -> np.ndarray:
    """Fast guided filter: coefficients at ``1/subsample`` resolution.

    The radius shrinks with the subsampling (minimum 1); coefficients are
    bilinearly upsampled and applied to the full-resolution guide.
    """
    if not subsample >= 1:
        raise InvalidInputError(f"subsample must be >= 1, got {subsample}")
    i = np.asarray(inp, dtype=np.float64)
    g = np.asarray(guide, dtype=np.float64)
    if i.shape != g.shape:
        raise InvalidInputError(f"dimension mismatch: input {i.shape} vs guide {g.shape}")
    h, w = g.shape[:2]
    lw, lh = max(1, round(w / subsample)), max(1, round(h / subsample))
    r_lr = max(1, round(radius / subsample))

    def one(ip, gp):
        ip, gp = as_plane(ip), as_plane(gp)
        if (lh, lw) == (h, w):
            return guided_upsample(ip, gp, gp, r_lr, eps_const)
        return guided_upsample(downscale(ip, lw, lh), downscale(gp, lw, lh), gp, r_lr, eps_const)

    if i.ndim == 2:
        return one(i, g)
    return np.stack([one(i[..., c], g[..., c]) for c in range(i.shape[2])], axis=-1)
