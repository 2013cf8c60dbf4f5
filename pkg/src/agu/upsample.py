"""Adaptive guided upsampling at inference time.

Work is split into :func:`prepare`, which computes everything that does not
depend on the lookup tables (class maps, window statistics, window extrema),
and :func:`render`, which turns a prepared pair and a model into the output.
Training re-renders the same prepared pairs many times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from agu._parallel import ordered_map
from agu.classify import brightness_classes, edge_classes
from agu.errors import InvalidInputError, InvalidModelError
from agu.guided import (
    CoeffField,
    WindowStats,
    epsilon_field,
    raw_coefficients,
    window_extrema,
    window_stats,
)
from agu.imaging import (
    as_plane,
    box_mean,
    downscale,
    nearest_resize,
    resize_linear,
    to_gray,
)
from agu.model import AguModel


def _check_lut_classes(classes: np.ndarray, *luts) -> None:
    sizes = {np.asarray(l).size for l in luts}
    if len(sizes) != 1:
        raise InvalidModelError(f"lookup tables disagree in length: {sorted(sizes)}")
    n = sizes.pop()
    if classes.size and (classes.min() < 0 or classes.max() >= n):
        raise InvalidModelError(f"class map has labels outside [0, {n - 1}]")


def upsample_coeffs(coeff: CoeffField, ecb_a, ecb_b, hr_classes: np.ndarray, uf: float | None = None) -> CoeffField:
    """Bilinearly upsample A and B and add the class-based corrections.

    The output takes the size of ``hr_classes``; when ``uf`` is given it must
    agree with that size to within one pixel.
    """
    ecb_a = np.asarray(ecb_a, dtype=np.float64)
    ecb_b = np.asarray(ecb_b, dtype=np.float64)
    _check_lut_classes(hr_classes, ecb_a, ecb_b)
    h, w = hr_classes.shape
    lh, lw = coeff.a.shape
    if uf is not None:
        _check_scale((lh, lw), (h, w), uf)
    a = resize_linear(as_plane(coeff.a, "A"), w, h) + ecb_a[hr_classes]
    b = resize_linear(as_plane(coeff.b, "B"), w, h) + ecb_b[hr_classes]
    return CoeffField(a, b)


def _check_scale(lr_shape, hr_shape, uf: float) -> None:
    if not uf >= 1:
        raise InvalidInputError(f"upscale factor must be >= 1, got {uf}")
    for lo, hi, axis in zip(lr_shape, hr_shape, ("height", "width")):
        if abs(round(lo * uf) - hi) > 1:
            raise InvalidInputError(
                f"{axis}: guide has {hi} px but input {lo} px x uf {uf} = {lo * uf:g}"
            )


@dataclass
class ChannelPrep:
    guide_hr: np.ndarray
    guide_lr: np.ndarray
    inp: np.ndarray
    stats: WindowStats
    cb_hr: np.ndarray
    lo: np.ndarray
    hi: np.ndarray


@dataclass
class Prepared:
    """LUT-independent state of one guide/input pair."""

    c_hr: np.ndarray
    c_lr: np.ndarray
    channels: list
    radius: int
    n_classes: int
    color: bool

    @property
    def hr_shape(self):
        return self.c_hr.shape

    @property
    def lr_shape(self):
        return self.c_lr.shape


@dataclass
class ChannelState:
    """Intermediates of one rendered channel (kept for gradient computation)."""

    eps: np.ndarray
    raw: CoeffField
    a_up: np.ndarray
    b_up: np.ndarray
    tau: np.ndarray
    xi_raw: np.ndarray
    xi: np.ndarray
    out_unclipped: np.ndarray
    out: np.ndarray


def _split(img: np.ndarray) -> list:
    return [img] if img.ndim == 2 else [img[..., c] for c in range(img.shape[2])]


def prepare(guide_hr, input_lr, model: AguModel, uf: float | None = None) -> Prepared:
    """Compute class maps and window statistics for a guide/input pair."""
    g = np.asarray(guide_hr, dtype=np.float64)
    i = np.asarray(input_lr, dtype=np.float64)
    if g.ndim != i.ndim or (g.ndim == 3 and g.shape[2] != i.shape[2]):
        raise InvalidInputError(f"channel layout mismatch: guide {g.shape} vs input {i.shape}")
    if g.ndim not in (2, 3):
        raise InvalidInputError(f"unsupported image shape {g.shape}")
    model.validate()
    hr_shape, lr_shape = g.shape[:2], i.shape[:2]
    if uf is None:
        uf = max(hr_shape[0] / lr_shape[0], hr_shape[1] / lr_shape[1])
    _check_scale(lr_shape, hr_shape, uf)
    r = model.radius
    kcfg, ccfg = model.kernel_cfg, model.class_cfg
    (h, w), (lh, lw) = hr_shape, lr_shape
    same = hr_shape == lr_shape

    g_planes = [as_plane(p, "guide") for p in _split(g)]
    i_planes = [as_plane(p, "input") for p in _split(i)]
    gl_planes = g_planes if same else [downscale(p, lw, lh) for p in g_planes]

    y_hr = to_gray(g)
    c_hr = edge_classes(y_hr, kcfg, ccfg)
    c_lr = c_hr if same else edge_classes(to_gray(np.stack(gl_planes, -1) if g.ndim == 3 else gl_planes[0]), kcfg, ccfg)

    def chan(k):
        gh, gl, ip = g_planes[k], gl_planes[k], i_planes[k]
        cb = brightness_classes(ip, gl, ccfg)
        lo, hi = window_extrema(gh, r)
        return ChannelPrep(
            guide_hr=gh, guide_lr=gl, inp=ip,
            stats=window_stats(ip, gl, r),
            cb_hr=cb if same else nearest_resize(cb, w, h),
            lo=lo, hi=hi,
        )

    channels = ordered_map(chan, range(len(g_planes)))
    return Prepared(c_hr, c_lr, channels, r, ccfg.n_classes, g.ndim == 3)


def render_channel(prep: Prepared, k: int, model: AguModel) -> ChannelState:
    ch = prep.channels[k]
    r = prep.radius
    h, w = prep.hr_shape
    eps = epsilon_field(model.lut_sigma, prep.c_lr, model.lam)
    raw = raw_coefficients(ch.stats, eps)
    up = upsample_coeffs(
        CoeffField(box_mean(raw.a, r), box_mean(raw.b, r)),
        model.lut_ecb_a, model.lut_ecb_b, prep.c_hr,
    )
    tau = model.lut_tau[ch.cb_hr]
    xi_raw = model.lut_xi[prep.c_hr]
    xi = np.clip(ch.guide_hr + xi_raw, ch.lo, ch.hi) - ch.guide_hr
    out = up.a * (ch.guide_hr + tau + xi) + up.b
    return ChannelState(eps, raw, up.a, up.b, tau, xi_raw, xi, out, np.clip(out, 0.0, 255.0))


def render(prep: Prepared, model: AguModel, keep: bool = False):
    """Produce the output image; with ``keep`` also return per-channel state."""
    if model.n_classes != prep.n_classes:
        raise InvalidModelError(
            f"model has {model.n_classes} classes, pair was prepared for {prep.n_classes}"
        )
    states = ordered_map(lambda k: render_channel(prep, k, model), range(len(prep.channels)))
    out = np.stack([s.out for s in states], axis=-1) if prep.color else states[0].out
    return (out, states) if keep else out


def agu_apply(guide_hr, input_lr, model: AguModel, uf: float | None = None, n_classes: int | None = None) -> np.ndarray:
    """Upsample ``input_lr`` to the guide's resolution.

    Args:
        guide_hr: High-resolution (low-light) guide, ``(H, W, 3)`` or ``(H, W)``.
        input_lr: Enhanced low-resolution image with the same channel layout.
        model: Trained lookup tables.
        uf: Upscale factor; derived from the shapes when omitted.
        n_classes: Expected class count; a model with a different count is
            rejected.

    Returns:
        Output image with the guide's dimensions, clamped to ``[0, 255]``.
    """
    if n_classes is not None and model.n_classes != n_classes:
        raise InvalidModelError(f"model has {model.n_classes} classes, expected {n_classes}")
    return render(prepare(guide_hr, input_lr, model, uf), model)


def agu_apply_same_res(guide, inp, model: AguModel) -> np.ndarray:
    g = np.asarray(guide)
    i = np.asarray(inp)
    if g.shape != i.shape:
        raise InvalidInputError(f"dimension mismatch: guide {g.shape} vs input {i.shape}")
    return agu_apply(g, i, model, uf=1)
