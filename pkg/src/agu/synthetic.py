"""Procedural bright test scenes (anti-aliased shapes, gratings and gradients)."""

from __future__ import annotations

import numpy as np

_SUPERSAMPLE = 3


def render_scene(width: int, height: int, seed=0, n_shapes: int = 14) -> np.ndarray:
    """Render a deterministic RGB scene in ``[0, 255]``.

    Geometry is defined in normalized coordinates, so the same seed gives the
    same scene at any resolution.
    """
    rng = np.random.default_rng(seed)
    s = _SUPERSAMPLE
    ys, xs = np.mgrid[0 : height * s, 0 : width * s].astype(np.float64)
    u = (xs + 0.5) / (width * s)
    v = (ys + 0.5) / (height * s)

    c0, c1 = rng.uniform(60, 200, 3), rng.uniform(60, 200, 3)
    angle = rng.uniform(0, 2 * np.pi)
    t = np.clip(0.5 + 0.7 * ((u - 0.5) * np.cos(angle) + (v - 0.5) * np.sin(angle)), 0, 1)
    img = c0 * (1 - t[..., None]) + c1 * t[..., None]

    for _ in range(n_shapes):
        kind = rng.choice(["rect", "ellipse", "grating", "line"], p=[0.35, 0.35, 0.15, 0.15])
        color = rng.uniform(20, 240, 3)
        cx, cy = rng.uniform(0.1, 0.9, 2)
        rot = rng.uniform(0, np.pi)
        du = (u - cx) * np.cos(rot) + (v - cy) * np.sin(rot)
        dv = -(u - cx) * np.sin(rot) + (v - cy) * np.cos(rot)
        if kind == "rect":
            a, b = rng.uniform(0.05, 0.25, 2)
            mask = (np.abs(du) < a) & (np.abs(dv) < b)
        elif kind == "ellipse":
            a, b = rng.uniform(0.04, 0.2, 2)
            mask = (du / a) ** 2 + (dv / b) ** 2 < 1.0
        elif kind == "grating":
            a, b = rng.uniform(0.08, 0.2, 2)
            period = rng.uniform(0.015, 0.05)
            mask = (np.abs(du) < a) & (np.abs(dv) < b) & (np.sin(2 * np.pi * du / period) > 0)
        else:
            a = rng.uniform(0.15, 0.4)
            thick = rng.uniform(0.004, 0.012)
            mask = (np.abs(du) < a) & (np.abs(dv) < thick)
        img[mask] = color

    img = img.reshape(height, s, width, s, 3).mean(axis=(1, 3))
    return np.clip(img, 0.0, 255.0)
