"""``agu`` command line: train, apply, compare, bench, synth, metrics.

Exit codes: 0 success, 1 processing error, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from agu import harness
from agu.classify import brightness_classes, edge_classes
from agu.errors import AguError, InvalidConfigError
from agu.imaging import KernelConfig, downscale, map_channels, stub_enhancer, to_gray
from agu.io import false_color, list_images, read_image, write_image
from agu.metrics import measure
from agu.model import DISABLE_GROUPS, AguModel
from agu.synthetic import render_scene
from agu.train import STAGES, TrainConfig, train_full

log = logging.getLogger("agu")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _uf(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 1.0 <= v <= 4.0:
        raise argparse.ArgumentTypeError(f"uf must lie in [1, 4], got {v}")
    return v


def _uf_list(text: str) -> list[float]:
    return [_uf(t) for t in text.split(",") if t.strip()]


def _size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 128x96, got {text!r}")
    if w < 3 or h < 3:
        raise argparse.ArgumentTypeError("size must be at least 3x3")
    return w, h


def _split_list(values) -> list[str]:
    out = []
    for v in values or []:
        out.extend(t.strip() for t in v.split(",") if t.strip())
    return out


def _disabled(args, valid) -> list[str]:
    groups = _split_list(args.disable)
    bad = [g for g in groups if g not in valid]
    if bad:
        raise UsageError(f"unknown --disable value(s) {', '.join(bad)}; valid: {', '.join(valid)}")
    return groups


def _existing(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def _load_model(args, required: bool) -> AguModel | None:
    if args.model is None:
        if required:
            raise UsageError("--model is required")
        return None
    return AguModel.load(_existing(args.model, "model"))


def _emit_rows(rows, columns, out) -> None:
    if out:
        harness.write_csv(out, rows, columns)
        print(f"wrote {out}")
        return
    print(",".join(columns))
    for row in rows:
        print(",".join(str(harness._fmt(row.get(c, ""))) for c in columns))


def _print_report(label: str, rep) -> None:
    parts = [f"sharpness={rep.sharpness:.4f}", f"noise={rep.noise:.4f}"]
    if not math.isnan(rep.psnr):
        parts.append(f"psnr={rep.psnr:.3f}")
    if not math.isnan(rep.ssim):
        parts.append(f"ssim={rep.ssim:.4f}")
    print(f"{label}: " + " ".join(parts))


# -- commands ------------------------------------------------------------------


def cmd_train(args) -> int:
    root = _existing(args.pair_dir, "pair directory")
    disable = _disabled(args, STAGES)
    cfg = TrainConfig(
        learning_rate=args.lr, max_epochs=args.max_epochs, tol=args.tol,
        ecb_step=args.ecb_step, ecb_max_iters=args.ecb_max_iters, uf=args.uf,
        seed=args.seed, lam=args.lam, disable=tuple(disable),
    )
    items = harness.load_dataset(root)
    pairs = harness.training_pairs(items, cfg.uf)
    model, report = train_full(pairs, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    report_path = Path(args.report) if args.report else out.with_name(out.stem + "_losses.csv")
    harness.write_csv(report_path, list(report.rows()), harness.LOSS_COLUMNS)
    for stage, loss in report.final_losses.items():
        print(f"{stage}: final loss {loss:.6g}")
    print(f"wrote {out} and {report_path}")
    return EXIT_OK


def cmd_apply(args) -> int:
    guide = read_image(_existing(args.guide, "guide image"))
    model = _load_model(args, required=False)
    if model is None:
        log.warning("no --model given: using all-zero tables")
        model = AguModel.zeros()
    model = model.disabled(_disabled(args, DISABLE_GROUPS))
    uf = 1.0 if args.same_res else args.uf
    if args.input:
        inp = read_image(_existing(args.input, "input image"))
    else:
        inp = stub_enhancer(guide) if args.same_res else harness.auto_input(guide, uf)
    out = harness.run_method(args.method, guide, inp, model, same_res=args.same_res)
    write_image(args.out, out)
    _print_report("input", measure(inp, kcfg=model.kernel_cfg))
    _print_report("output", harness.score(out, inp, model.kernel_cfg))
    if args.dump_classes:
        _dump_classes(Path(args.dump_classes), guide, inp, model)
    print(f"wrote {args.out}")
    return EXIT_OK


def _dump_classes(directory: Path, guide, inp, model: AguModel) -> None:
    n = model.n_classes
    edges = edge_classes(to_gray(guide), model.kernel_cfg, model.class_cfg)
    write_image(directory / "edge_classes.png", false_color(edges, n))
    lh, lw = np.shape(inp)[:2]
    g_lr = map_channels(lambda p: downscale(p, lw, lh), guide)
    bright = brightness_classes(to_gray(inp), to_gray(g_lr), model.class_cfg)
    write_image(directory / "brightness_classes.png", false_color(bright, n))


def cmd_compare(args) -> int:
    root = _existing(args.dataset, "dataset directory")
    model = _load_model(args, required=False)
    if model is not None:
        model = model.disabled(_disabled(args, DISABLE_GROUPS))
    elif args.disable:
        raise UsageError("--disable needs --model")
    if args.method is None:
        methods = [m for m in harness.METHODS if model is not None or m not in harness.MODEL_METHODS]
    else:
        methods = _split_list(args.method)
        if not methods:
            raise UsageError(f"empty method list; valid: {', '.join(harness.METHODS)}")
    bad = [m for m in methods if m not in harness.METHODS]
    if bad:
        raise UsageError(f"unknown method(s) {', '.join(bad)}; valid: {', '.join(harness.METHODS)}")
    need = [m for m in methods if m in harness.MODEL_METHODS]
    if need and model is None:
        raise UsageError(f"method(s) {', '.join(need)} need --model")
    items = harness.load_dataset(root)
    rows = harness.compare(items, methods, args.uf, model, same_res=args.same_res)
    _emit_rows(rows, harness.COMPARE_COLUMNS, args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    guide = read_image(_existing(args.guide, "guide image"))
    model = _load_model(args, required=False) or AguModel.zeros()
    model = model.disabled(_disabled(args, DISABLE_GROUPS))
    if args.reps < 10:
        raise UsageError(f"--reps must be >= 10, got {args.reps}")
    ufs = args.uf if isinstance(args.uf, list) else [args.uf]
    rows = harness.bench(guide, model, ufs, reps=args.reps)
    _emit_rows(rows, harness.BENCH_COLUMNS, args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.noise < 0:
        raise UsageError("--noise must be >= 0")
    if args.gain <= 0 or args.gamma <= 0:
        raise UsageError("--gain and --gamma must be > 0")
    if args.bright_dir:
        root = _existing(args.bright_dir, "bright image directory")
        paths = list_images(root)
        if not paths:
            raise UsageError(f"{root}: no images found")
        bright = {p.name: read_image(p) for p in paths}
    else:
        w, h = args.size
        bright = {f"scene_{k:03d}.png": render_scene(w, h, seed=(args.seed, k)) for k in range(args.count)}
    written = harness.synth(bright, args.out, args.noise, args.seed, args.gain, args.gamma)
    print(f"wrote {len(written)} pairs to {args.out}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    img = read_image(_existing(args.image, "image"))
    ref = read_image(_existing(args.ref, "reference image")) if args.ref else None
    rep = measure(img, ref, KernelConfig())
    row = {"image": str(args.image), **rep.as_row()}
    _emit_rows([row], ("image", "sharpness", "noise", "psnr", "ssim"), args.out)
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="agu", description="Adaptive guided upsampling toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit a model on <dir>/low + <dir>/high pairs")
    t.add_argument("pair_dir")
    t.add_argument("--out", required=True, help="model JSON to write")
    t.add_argument("--report", help="loss CSV (default: <out>_losses.csv)")
    t.add_argument("--uf", type=_uf, default=2.0)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--disable", action="append", help=f"skip stage(s): {', '.join(STAGES)}")
    t.add_argument("--lr", type=float, default=0.1)
    t.add_argument("--max-epochs", type=int, default=200)
    t.add_argument("--tol", type=float, default=1e-5)
    t.add_argument("--ecb-step", type=float, default=0.05)
    t.add_argument("--ecb-max-iters", type=int, default=100)
    t.add_argument("--lam", type=float, default=0.01)
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("apply", help="enhance one image")
    a.add_argument("guide", help="low-light image at output resolution")
    a.add_argument("--input", help="enhanced low-resolution input (default: derived from the guide)")
    a.add_argument("--model")
    a.add_argument("--method", default="agu", choices=harness.METHODS)
    a.add_argument("--uf", type=_uf, default=2.0)
    a.add_argument("--same-res", action="store_true", help="input and output share the guide's size")
    a.add_argument("--disable", action="append", help=f"zero table group(s): {', '.join(DISABLE_GROUPS)}")
    a.add_argument("--dump-classes", metavar="DIR", help="write false-color class maps")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_apply)

    c = sub.add_parser("compare", help="corpus-averaged metrics per method")
    c.add_argument("dataset")
    c.add_argument("--method", action="append", help=f"method(s), repeatable or comma separated: {', '.join(harness.METHODS)}")
    c.add_argument("--model")
    c.add_argument("--uf", type=_uf, default=2.0)
    c.add_argument("--same-res", action="store_true")
    c.add_argument("--disable", action="append")
    c.add_argument("--out", help="CSV path (default: stdout)")
    c.set_defaults(func=cmd_compare)

    b = sub.add_parser("bench", help="runtime per scale factor")
    b.add_argument("guide", help="low-resolution frame")
    b.add_argument("--model")
    b.add_argument("--uf", type=_uf_list, default=[1.5, 2.0, 3.0, 4.0], help="comma separated factors")
    b.add_argument("--reps", type=int, default=10)
    b.add_argument("--disable", action="append")
    b.add_argument("--out", help="CSV path (default: stdout)")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("synth", help="write a synthetic low/high pair corpus")
    s.add_argument("bright_dir", nargs="?", help="bright images (default: procedural scenes)")
    s.add_argument("--out", required=True)
    s.add_argument("--noise", type=float, default=4.0, help="Gaussian noise sigma")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--gain", type=float, default=3.0)
    s.add_argument("--gamma", type=float, default=2.2)
    s.add_argument("--count", type=int, default=3, help="procedural scenes to render")
    s.add_argument("--size", type=_size, default=(128, 128), help="procedural scene size WxH")
    s.set_defaults(func=cmd_synth)

    m = sub.add_parser("metrics", help="sharpness, noise and optionally PSNR/SSIM")
    m.add_argument("image")
    m.add_argument("--ref")
    m.add_argument("--out", help="CSV path (default: stdout)")
    m.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, InvalidConfigError) as exc:
        print(f"agu {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AguError, OSError, ValueError) as exc:
        print(f"agu {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
