"""Experiment plumbing behind the command line: datasets, method comparison,
runtime benchmarks and synthetic corpora."""

from __future__ import annotations

import csv
import math
import statistics
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from agu._parallel import ordered_map
from agu.errors import InvalidConfigError, InvalidInputError
from agu.guided import agf_apply, fgf_apply, guided_upsample
from agu.imaging import (
    KernelConfig,
    bilateral_filter,
    bilinear_resize,
    downscale,
    map_channels,
    stub_enhancer,
)
from agu.io import list_images, read_image, write_image
from agu.metrics import MetricsReport, measure
from agu.model import AguModel
from agu.train import TrainPair, degrade, make_pair
from agu.upsample import agu_apply

METHODS = ("agu", "agf", "fgf", "bf", "bilinear")
MODEL_METHODS = ("agu", "agf")

# Uniform regularizer of the fast guided filter baseline, in squared
# intensity units (a 5% contrast threshold on the 0..255 range).
FGF_EPS = (0.05 * 255.0) ** 2
FGF_SUBSAMPLE = 2

COMPARE_COLUMNS = ("method", "sharpness", "noise", "psnr", "ssim")
BENCH_COLUMNS = ("uf", "width", "height", "reps", "mean_ms", "median_ms", "std_ms", "fit_c1", "fit_c2", "fit_r2")
LOSS_COLUMNS = ("stage", "step", "loss")


@dataclass
class DatasetItem:
    name: str
    low: np.ndarray
    high: np.ndarray


def load_dataset(directory) -> list[DatasetItem]:
    """Read ``<dir>/low/NAME`` + ``<dir>/high/NAME`` pairs, sorted by name.

    Raises:
        InvalidConfigError: The directory or its ``low``/``high`` folders are
            missing or empty.
        InvalidInputError: Some files have no partner or the partners'
            dimensions disagree.
    """
    root = Path(directory)
    low_dir, high_dir = root / "low", root / "high"
    if not low_dir.is_dir() or not high_dir.is_dir():
        raise InvalidConfigError(f"{root}: expected subdirectories low/ and high/")
    lows = {p.name: p for p in list_images(low_dir)}
    highs = {p.name: p for p in list_images(high_dir)}
    if not lows and not highs:
        raise InvalidConfigError(f"{root}: no images found in low/ or high/")
    unmatched = sorted(f"low/{n}" for n in set(lows) - set(highs))
    unmatched += sorted(f"high/{n}" for n in set(highs) - set(lows))
    if unmatched:
        raise InvalidInputError(f"{root}: unmatched files: {', '.join(unmatched)}")
    items = []
    for name in sorted(lows):
        low, high = read_image(lows[name]), read_image(highs[name])
        if low.shape != high.shape:
            raise InvalidInputError(f"{name}: low {low.shape} and high {high.shape} differ")
        items.append(DatasetItem(name, low, high))
    return items


def lr_size(shape, uf: float) -> tuple[int, int]:
    """``(w, h)`` of the low-resolution image for a full-resolution shape."""
    h, w = shape[:2]
    return max(1, round(w / uf)), max(1, round(h / uf))


def auto_input(guide, uf: float, gain: float = 3.0, gamma: float = 2.2) -> np.ndarray:
    """Enhanced low-resolution input derived from the guide (downscale, then brighten)."""
    w, h = lr_size(np.shape(guide), uf)
    small = map_channels(lambda p: downscale(p, w, h), np.asarray(guide, dtype=np.float64))
    return stub_enhancer(small, gain, gamma)


def training_pairs(items: list[DatasetItem], uf: float) -> list[TrainPair]:
    return [make_pair(it.low, it.high, uf, name=it.name) for it in items]


def _resize(img, w, h):
    return map_channels(lambda p: bilinear_resize(p, w, h), img)


def run_method(method: str, guide, inp, model: AguModel | None, same_res: bool = False,
               kcfg: KernelConfig | None = None) -> np.ndarray:
    """Produce one method's output for a guide and its enhanced input.

    In upsampling mode the output has the guide's size. ``agu`` and ``fgf``
    upsample through the guide; ``agf`` and ``bf`` filter at the input's
    resolution and are then bilinearly upsampled. With ``same_res`` every
    method runs at the input's resolution, which must equal the guide's.
    """
    if method not in METHODS:
        raise InvalidConfigError(f"unknown method {method!r}; valid: {', '.join(METHODS)}")
    if method in MODEL_METHODS and model is None:
        raise InvalidConfigError(f"method {method!r} needs --model")
    g = np.asarray(guide, dtype=np.float64)
    i = np.asarray(inp, dtype=np.float64)
    kcfg = kcfg or (model.kernel_cfg if model is not None else KernelConfig())
    radius = model.radius if model is not None else kcfg.radius
    h, w = g.shape[:2]
    lh, lw = i.shape[:2]
    if same_res and (h, w) != (lh, lw):
        raise InvalidInputError(f"same-resolution mode needs equal sizes, got {g.shape} vs {i.shape}")
    g_lr = g if (h, w) == (lh, lw) else map_channels(lambda p: downscale(p, lw, lh), g)

    if method == "agu":
        return agu_apply(g, i, model)
    if method == "bilinear":
        return _resize(i, w, h)
    if method == "bf":
        return _resize(map_channels(lambda p: bilateral_filter(p, kcfg), i), w, h)
    if method == "agf":
        return _resize(agf_apply(i, g_lr, model), w, h)
    # fgf
    if same_res:
        return _per_channel(lambda ip, gp: fgf_apply(ip, gp, radius, FGF_EPS, FGF_SUBSAMPLE), i, g)
    return _per_channel3(lambda ip, gl, gh: guided_upsample(ip, gl, gh, radius, FGF_EPS), i, g_lr, g)


def _per_channel(fn, a, b):
    if a.ndim == 2:
        return fn(a, b)
    return np.stack([fn(a[..., c], b[..., c]) for c in range(a.shape[2])], axis=-1)


def _per_channel3(fn, a, b, c):
    if a.ndim == 2:
        return fn(a, b, c)
    return np.stack([fn(a[..., k], b[..., k], c[..., k]) for k in range(a.shape[2])], axis=-1)


def score(output, inp, kcfg: KernelConfig = KernelConfig()) -> MetricsReport:
    """Metrics of an output; PSNR/SSIM against the input at the input's size."""
    o = np.asarray(output, dtype=np.float64)
    i = np.asarray(inp, dtype=np.float64)
    lh, lw = i.shape[:2]
    ref_view = o if o.shape[:2] == (lh, lw) else map_channels(lambda p: downscale(p, lw, lh), o)
    rep = measure(o, kcfg=kcfg)
    ref = measure(ref_view, i, kcfg)
    rep.psnr, rep.ssim = ref.psnr, ref.ssim
    return rep


def compare(items: list[DatasetItem], methods, uf: float, model: AguModel | None,
            same_res: bool = False) -> list[dict]:
    """Corpus-averaged metrics, one row per method plus a leading ``input`` row."""
    methods = list(methods)
    if not methods:
        raise InvalidConfigError("no methods given")
    for m in methods:
        if m not in METHODS:
            raise InvalidConfigError(f"unknown method {m!r}; valid: {', '.join(METHODS)}")
    if not items:
        raise InvalidConfigError("empty dataset")
    kcfg = model.kernel_cfg if model is not None else KernelConfig()

    def one(it):
        inp = stub_enhancer(it.low) if same_res else auto_input(it.low, uf)
        reps = {"input": measure(inp, inp, kcfg)}
        for m in methods:
            reps[m] = score(run_method(m, it.low, inp, model, same_res, kcfg), inp, kcfg)
        return reps

    per_item = ordered_map(one, items)
    rows = []
    for m in ["input", *methods]:
        reports = [r[m] for r in per_item]
        row = {"method": m}
        for key in ("sharpness", "noise", "psnr", "ssim"):
            row[key] = _mean([getattr(r, key) for r in reports])
        rows.append(row)
    return rows


def _mean(values) -> float:
    if any(math.isinf(v) for v in values):
        return math.inf
    return float(np.mean(values))


def fit_quadratic(ufs, times) -> tuple[float, float, float]:
    """Least-squares ``t = c1 * uf**2 + c2``; returns ``(c1, c2, r2)``."""
    x = np.asarray(ufs, dtype=np.float64) ** 2
    y = np.asarray(times, dtype=np.float64)
    design = np.stack([x, np.ones_like(x)], axis=1)
    (c1, c2), *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - (c1 * x + c2)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(c1), float(c2), r2


def bench(guide, model: AguModel, ufs, reps: int = 10, warmup: int = 3, clock=time.perf_counter) -> list[dict]:
    """Time ``agu_apply`` for each factor in ``ufs``.

    The given image is the low-resolution frame: it is brightened to form
    the input and bilinearly enlarged by ``uf`` to form the guide, so only
    the high-resolution work grows with the factor.
    """
    if reps < 10:
        raise InvalidConfigError(f"reps must be >= 10, got {reps}")
    ufs = [float(u) for u in ufs]
    if not ufs:
        raise InvalidConfigError("no scale factors given")
    for u in ufs:
        if not 1.0 <= u <= 4.0:
            raise InvalidConfigError(f"uf must lie in [1, 4], got {u}")
    g = np.asarray(guide, dtype=np.float64)
    h, w = g.shape[:2]
    inp = stub_enhancer(g)
    rows = []
    for u in ufs:
        hw, hh = round(w * u), round(h * u)
        g_hr = g if (hw, hh) == (w, h) else _resize(g, hw, hh)
        for _ in range(warmup):
            agu_apply(g_hr, inp, model, uf=u)
        samples = []
        for _ in range(reps):
            t0 = clock()
            agu_apply(g_hr, inp, model, uf=u)
            samples.append((clock() - t0) * 1000.0)
        rows.append({
            "uf": u, "width": hw, "height": hh, "reps": reps,
            "mean_ms": statistics.fmean(samples),
            "median_ms": statistics.median(samples),
            "std_ms": statistics.pstdev(samples),
        })
    if len(rows) >= 2:
        c1, c2, r2 = fit_quadratic([r["uf"] for r in rows], [r["mean_ms"] for r in rows])
    else:
        c1, c2, r2 = math.nan, rows[0]["mean_ms"], math.nan
    for r in rows:
        r.update(fit_c1=c1, fit_c2=c2, fit_r2=r2)
    return rows


def synth(bright_images: dict, out_dir, noise_sigma: float, seed: int,
          gain: float = 3.0, gamma: float = 2.2) -> list[Path]:
    """Write ``out/low`` (darkened, noisy) and ``out/high`` (bright) pairs.

    ``bright_images`` maps file names to images. Each pair gets its own
    noise stream derived from ``seed`` and its position in sorted order.
    """
    out = Path(out_dir)
    written = []
    for k, name in enumerate(sorted(bright_images)):
        bright = np.asarray(bright_images[name], dtype=np.float64)
        low = degrade(bright, noise_sigma, (seed, k), gain, gamma)
        stem = Path(name).with_suffix(".png").name
        write_image(out / "high" / stem, bright)
        write_image(out / "low" / stem, low)
        written.append(out / "low" / stem)
    return written


def write_csv(path, rows, columns) -> None:
    """Write rows with a header; infinities are spelled ``inf``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k, "")) for k in columns})


def _fmt(v):
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return v
