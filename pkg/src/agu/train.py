"""Sequential learning of the four lookup-table parameters.

Stages run in the order tau -> sigma -> xi -> ecb. The first three minimise
the squared error between the rendered output and the bright target by
per-class gradient descent (fixed rate, halved whenever a step would raise
the loss). ``ecb`` is fitted by a signed step search that matches per-class
mean LoG responses of the output to those of the reference.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from agu._parallel import ordered_map
from agu.classify import ClassConfig
from agu.errors import InvalidConfigError, InvalidInputError
from agu.imaging import (
    KernelConfig,
    LUMA_WEIGHTS,
    bilateral_filter,
    box_mean_adjoint,
    downscale,
    inverse_stub_enhancer,
    log_response,
    map_channels,
    resize_linear_adjoint,
    stub_enhancer,
    to_gray,
)
from agu.io import to_uint8
from agu.metrics import noise_estimate
from agu.model import AguModel
from agu.upsample import Prepared, prepare, render

log = logging.getLogger(__name__)

STAGES = ("tau", "sigma", "xi", "ecb")


@dataclass
class TrainPair:
    """One training example.

    Attributes:
        guide_hr: Low-light camera image at full resolution.
        target: Bright reference at the guide's resolution.
        input_lr: Enhanced low-resolution image.
    """

    guide_hr: np.ndarray
    target: np.ndarray
    input_lr: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.guide_hr = np.asarray(self.guide_hr, dtype=np.float64)
        self.target = np.asarray(self.target, dtype=np.float64)
        self.input_lr = np.asarray(self.input_lr, dtype=np.float64)
        if self.guide_hr.shape != self.target.shape:
            raise InvalidInputError(
                f"pair {self.name!r}: guide {self.guide_hr.shape} and target "
                f"{self.target.shape} differ"
            )
        if self.guide_hr.ndim != self.input_lr.ndim:
            raise InvalidInputError(f"pair {self.name!r}: guide and input channel layout differ")


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    max_epochs: int = 200
    tol: float = 1e-5
    ecb_step: float = 0.05
    ecb_max_iters: int = 100
    uf: float = 2.0
    seed: int = 0
    lam: float = 0.01
    n_classes: int = 121
    clamp_log: float = 32.0
    kernel_cfg: KernelConfig = field(default_factory=KernelConfig)
    # "target": match the bright reference's LoG; "guide": the low-light guide's
    ecb_reference: str = "target"
    disable: tuple = ()

    def __post_init__(self):
        if not (self.learning_rate > 0 and self.ecb_step > 0 and self.tol >= 0):
            raise InvalidConfigError("learning_rate and ecb_step must be > 0, tol >= 0")
        if self.max_epochs < 1 or self.ecb_max_iters < 0:
            raise InvalidConfigError("max_epochs must be >= 1 and ecb_max_iters >= 0")
        if not self.uf >= 1:
            raise InvalidConfigError(f"uf must be >= 1, got {self.uf}")
        if self.ecb_reference not in ("target", "guide"):
            raise InvalidConfigError(f"ecb_reference must be 'target' or 'guide'")
        unknown = set(self.disable) - set(STAGES)
        if unknown:
            raise InvalidConfigError(f"unknown stages to disable: {sorted(unknown)}")
        self.disable = tuple(sorted(set(self.disable)))
        ClassConfig(self.n_classes, self.clamp_log)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel_cfg"] = self.kernel_cfg.to_dict()
        d["disable"] = list(self.disable)
        return d


@dataclass
class TrainReport:
    traces: dict = field(default_factory=dict)
    edge_class_counts: np.ndarray | None = None
    brightness_class_counts: np.ndarray | None = None

    @property
    def final_losses(self) -> dict:
        return {k: v[-1] for k, v in self.traces.items() if v}

    def rows(self):
        for stage, trace in self.traces.items():
            for i, loss in enumerate(trace):
                yield {"stage": stage, "step": i, "loss": loss}


def make_pair(guide_hr, target, uf: float, input_lr=None, gain: float = 3.0, gamma: float = 2.2, name: str = "") -> TrainPair:
    """Build a pair, producing the enhanced input from the guide when absent.

    The automatic input follows the capture pipeline: downscale the guide
    by ``uf``, then brighten it with :func:`stub_enhancer`.
    """
    g = np.asarray(guide_hr, dtype=np.float64)
    if input_lr is None:
        h, w = g.shape[:2]
        lw, lh = max(1, round(w / uf)), max(1, round(h / uf))
        input_lr = stub_enhancer(map_channels(lambda p: downscale(p, lw, lh), g), gain, gamma)
    return TrainPair(g, target, input_lr, name)


def degrade(bright, noise_sigma: float, seed, gain: float = 3.0, gamma: float = 2.2, quantize: bool = True) -> np.ndarray:
    """Synthesize a low-light capture from a bright image.

    Inverse stub enhancement followed by additive Gaussian noise. The same
    noise draw is added to every channel so the luma noise equals
    ``noise_sigma``.
    """
    rng = np.random.default_rng(seed)
    a = np.asarray(bright, dtype=np.float64)
    dark = inverse_stub_enhancer(a, gain, gamma)
    noise = rng.normal(0.0, noise_sigma, size=a.shape[:2]) if noise_sigma > 0 else np.zeros(a.shape[:2])
    if a.ndim == 3:
        noise = noise[..., None]
    low = np.clip(dark + noise, 0.0, 255.0)
    return to_uint8(low).astype(np.float64) if quantize else low


def synthetic_corpus(
    n_pairs: int = 3,
    size: tuple[int, int] = (64, 64),
    uf: float = 2.0,
    noise_sigma: float = 4.0,
    seed: int = 0,
    gain: float = 3.0,
    gamma: float = 2.2,
) -> list[TrainPair]:
    """Seeded synthetic pairs; ``size`` is the low-resolution ``(w, h)``."""
    from agu.synthetic import render_scene

    w, h = size
    hw, hh = round(w * uf), round(h * uf)
    pairs = []
    for k in range(n_pairs):
        bright = render_scene(hw, hh, seed=(seed, k))
        low = degrade(bright, noise_sigma, (seed, k, 1), gain, gamma)
        lr = stub_enhancer(map_channels(lambda p: downscale(p, w, h), low), gain, gamma)
        pairs.append(TrainPair(low, bright, lr, name=f"synth_{k:03d}"))
    return pairs


# -- shared machinery ---------------------------------------------------------


class _Corpus:
    """Prepared pairs plus the quantities every stage needs."""

    def __init__(self, pairs, model: AguModel, uf: float):
        if not pairs:
            raise InvalidInputError("no training pairs given")
        self.pairs = list(pairs)
        self.preps: list[Prepared] = ordered_map(
            lambda p: prepare(p.guide_hr, p.input_lr, model, uf), self.pairs
        )
        self.targets = [_channels(p.target) for p in self.pairs]
        self.n_pix = sum(t.size for p in self.pairs for t in [p.target])
        self.n_classes = model.n_classes

    def loss(self, model: AguModel) -> float:
        total = 0.0
        for prep, pair in zip(self.preps, self.pairs):
            out = render(prep, model)
            total += float(np.sum((out - pair.target) ** 2))
        return total / self.n_pix

    def edge_counts(self) -> np.ndarray:
        c = np.zeros(self.n_classes)
        for prep in self.preps:
            c += np.bincount(prep.c_hr.ravel(), minlength=self.n_classes)
        return c

    def brightness_counts(self) -> np.ndarray:
        c = np.zeros(self.n_classes)
        for prep in self.preps:
            for ch in prep.channels:
                c += np.bincount(ch.cb_hr.ravel(), minlength=self.n_classes)
        return c


def _channels(img: np.ndarray) -> list:
    return [img] if img.ndim == 2 else [img[..., c] for c in range(img.shape[2])]


def _class_mean(labels, values, n) -> tuple[np.ndarray, np.ndarray]:
    s = np.bincount(labels.ravel(), weights=values.ravel(), minlength=n)
    c = np.bincount(labels.ravel(), minlength=n).astype(np.float64)
    return s, c


def stage_gradient(corpus: _Corpus, model: AguModel, stage: str):
    """Per-class gradient of the summed squared error, averaged over support.

    For ``sigma`` the gradient is taken with respect to the regularizer
    ``eps = lam * sigma ** 2`` of each edge class.

    Returns:
        ``(loss, grad)`` where ``loss`` is the mean squared error.
    """
    n = corpus.n_classes

    def one(idx):
        prep, pair = corpus.preps[idx], corpus.pairs[idx]
        out, states = render(prep, model, keep=True)
        sums = np.zeros(n)
        counts = np.zeros(n)
        sq = float(np.sum((out - pair.target) ** 2))
        for k, (st, tgt) in enumerate(zip(states, corpus.targets[idx])):
            ch = prep.channels[k]
            inside = (st.out_unclipped >= 0.0) & (st.out_unclipped <= 255.0)
            e = 2.0 * (st.out - tgt) * inside
            if stage == "tau":
                s, c = _class_mean(ch.cb_hr, e * st.a_up, n)
            elif stage == "xi":
                moved = ch.guide_hr + st.xi_raw
                free = (moved >= ch.lo) & (moved <= ch.hi)
                s, c = _class_mean(prep.c_hr, e * st.a_up * free, n)
            elif stage == "sigma":
                s, c = _class_mean(prep.c_lr, _eps_gradient(prep, k, st, e), n)
            else:
                raise ValueError(stage)
            sums += s
            counts += c
        return sq, sums, counts

    results = ordered_map(one, range(len(corpus.pairs)))
    sq = sum(r[0] for r in results)
    sums = np.sum([r[1] for r in results], axis=0)
    counts = np.sum([r[2] for r in results], axis=0)
    grad = np.divide(sums, counts, out=np.zeros(n), where=counts > 0)
    return sq / corpus.n_pix, grad


def _eps_gradient(prep: Prepared, k: int, st, e: np.ndarray) -> np.ndarray:
    """d(sum sq err)/d(eps) at every low-resolution pixel (adjoint pass)."""
    ch = prep.channels[k]
    r = prep.radius
    lh, lw = prep.lr_shape
    g_aup = e * (ch.guide_hr + st.tau + st.xi)
    g_bup = e
    g_a = box_mean_adjoint(resize_linear_adjoint(g_aup, lw, lh), r)
    g_b = box_mean_adjoint(resize_linear_adjoint(g_bup, lw, lh), r)
    den = ch.stats.var_g + st.eps
    active = den > 1e-9
    d_a_d_eps = np.where(active, -st.raw.a / np.where(active, den, 1.0), 0.0)
    return (g_a - g_b * ch.stats.mean_g) * d_a_d_eps


def _descend(corpus: _Corpus, model: AguModel, stage: str, cfg: TrainConfig):
    """Gradient descent on one table with backtracking; returns (model, trace)."""

    def with_params(m, p):
        if stage == "sigma":
            return m.copy(lut_sigma=np.sqrt(p / m.lam))
        return m.copy(**{f"lut_{stage}": p})

    if stage == "sigma":
        params = model.lam * model.lut_sigma**2
    else:
        params = getattr(model, f"lut_{stage}").copy()
    loss, grad = stage_gradient(corpus, model, stage)
    trace = [loss]
    rate = cfg.learning_rate
    for _ in range(cfg.max_epochs):
        if not np.any(grad):
            break
        accepted = False
        for _ in range(40):
            cand = params - rate * grad
            if stage == "sigma":
                cand = np.maximum(cand, 0.0)
            cand_model = with_params(model, cand)
            cand_loss = corpus.loss(cand_model)
            if cand_loss <= loss:
                accepted = True
                break
            rate *= 0.5
        if not accepted:
            break
        improvement = (loss - cand_loss) / loss if loss > 0 else 0.0
        params, model = cand, cand_model
        loss, grad = stage_gradient(corpus, model, stage)
        trace.append(loss)
        if improvement < cfg.tol:
            break
    return model, trace


def train_tau(pairs, cfg: TrainConfig, model: AguModel | None = None, report: TrainReport | None = None) -> np.ndarray:
    """Brightness-class offsets, with sigma, xi and ecb held at zero."""
    base = _zero_model(cfg) if model is None else model.copy(
        lut_tau=np.zeros(cfg.n_classes), lut_sigma=np.zeros(cfg.n_classes),
        lut_xi=np.zeros(cfg.n_classes), lut_ecb_a=np.zeros(cfg.n_classes),
        lut_ecb_b=np.zeros(cfg.n_classes),
    )
    corpus = pairs if isinstance(pairs, _Corpus) else _Corpus(pairs, base, cfg.uf)
    trained, trace = _descend(corpus, base, "tau", cfg)
    if report is not None:
        report.traces["tau"] = trace
    return trained.lut_tau


def train_sigma(pairs, cfg: TrainConfig, lut_tau, model: AguModel | None = None, report: TrainReport | None = None) -> np.ndarray:
    """Per-edge-class smoothing strength with tau fixed and xi at zero."""
    base = (_zero_model(cfg) if model is None else model).copy(
        lut_tau=np.asarray(lut_tau, dtype=np.float64), lut_xi=np.zeros(cfg.n_classes)
    )
    corpus = pairs if isinstance(pairs, _Corpus) else _Corpus(pairs, base, cfg.uf)
    if base.lam == 0:
        trace = [corpus.loss(base)]
        trained = base
    else:
        trained, trace = _descend(corpus, base, "sigma", cfg)
    if report is not None:
        report.traces["sigma"] = trace
    return trained.lut_sigma


def train_xi(pairs, cfg: TrainConfig, lut_tau, lut_sigma, model: AguModel | None = None, report: TrainReport | None = None) -> np.ndarray:
    """Per-edge-class sharpening offsets with tau and sigma fixed."""
    base = (_zero_model(cfg) if model is None else model).copy(
        lut_tau=np.asarray(lut_tau, dtype=np.float64),
        lut_sigma=np.asarray(lut_sigma, dtype=np.float64),
    )
    corpus = pairs if isinstance(pairs, _Corpus) else _Corpus(pairs, base, cfg.uf)
    trained, trace = _descend(corpus, base, "xi", cfg)
    if report is not None:
        report.traces["xi"] = trace
    return trained.lut_xi


class _EcbState:
    """Cached per-pair planes so re-rendering only adds the corrections."""

    def __init__(self, corpus: _Corpus, model: AguModel, reference: str):
        self.kcfg = model.kernel_cfg
        self.n = model.n_classes
        self.items = []
        ref_sum = np.zeros(self.n)
        counts = np.zeros(self.n)
        for prep, pair in zip(corpus.preps, corpus.pairs):
            _, states = render(prep, model.copy(
                lut_ecb_a=np.zeros(self.n), lut_ecb_b=np.zeros(self.n)), keep=True)
            planes = [
                (st.a_up, st.b_up, prep.channels[k].guide_hr + st.tau + st.xi)
                for k, st in enumerate(states)
            ]
            ref_img = pair.target if reference == "target" else pair.guide_hr
            ref_log = self._log(to_gray(ref_img))
            s, c = _class_mean(prep.c_hr, ref_log, self.n)
            ref_sum += s
            counts += c
            self.items.append((prep.c_hr, planes, prep.color))
        self.counts = counts
        self.support = counts > 0
        self.ref_mean = np.divide(ref_sum, counts, out=np.zeros(self.n), where=self.support)

    def _log(self, plane):
        return log_response(bilateral_filter(plane, self.kcfg), self.kcfg)

    def out_means(self, ecb_a, ecb_b) -> np.ndarray:
        def one(item):
            c, planes, color = item
            da, db = ecb_a[c], ecb_b[c]
            outs = [np.clip((a + da) * m + b + db, 0.0, 255.0) for a, b, m in planes]
            if color:
                gray = sum(wt * o for wt, o in zip(LUMA_WEIGHTS, outs))
            else:
                gray = outs[0]
            return _class_mean(c, self._log(np.clip(gray, 0.0, 255.0)), self.n)[0]

        total = np.sum(ordered_map(one, self.items), axis=0)
        return np.divide(total, self.counts, out=np.zeros(self.n), where=self.support)

    def weighted(self, j: np.ndarray) -> float:
        """Pixel-weighted mean of a per-class objective."""
        return float(np.sum(j * self.counts) / self.counts.sum())

    def objective(self, ecb_a, ecb_b) -> tuple[np.ndarray, np.ndarray]:
        """Per-class ``|mean LoG(ref) - mean LoG(out)|`` and the output means."""
        means = self.out_means(ecb_a, ecb_b)
        return np.abs(self.ref_mean - means) * self.support, means


def train_ecb(pairs, cfg: TrainConfig, model: AguModel, report: TrainReport | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Fit the upsampling corrections for A and B by signed step search.

    Each sweep moves every still-active class of one table by a fixed step.
    The sign is taken from comparing mean LoG responses (``+`` when the
    reference response is below the output's); classes that this does not
    improve try the opposite sign, and classes improved by neither are
    frozen. Because a step also changes the LoG of neighbouring pixels in
    other classes, a sweep is committed only if the pixel-weighted objective
    drops, halving the set of moved classes until it does. The A and B
    tables alternate; the B step is scaled by the mean guide level so both
    move the output by comparable amounts.

    A final repair pass pushes every class back to at most its objective at
    zero correction; if that fails the all-zero tables are returned.
    """
    if not cfg.uf > 1:
        raise InvalidConfigError(f"ecb training needs uf > 1, got {cfg.uf}")
    corpus = pairs if isinstance(pairs, _Corpus) else _Corpus(pairs, model, cfg.uf)
    state = _EcbState(corpus, model, cfg.ecb_reference)
    n = model.n_classes
    luts = {"a": np.zeros(n), "b": np.zeros(n)}
    mean_level = float(np.mean([np.mean(p.guide_hr) for p in corpus.pairs]))
    steps = {"a": cfg.ecb_step, "b": cfg.ecb_step * max(mean_level, 1.0)}
    frozen = {"a": ~state.support, "b": ~state.support}
    j0, means = state.objective(luts["a"], luts["b"])
    j_cur = j0.copy()
    trace = [state.weighted(j_cur)]

    for _ in range(cfg.ecb_max_iters):
        moved_any = False
        for key in ("a", "b"):
            active = ~frozen[key]
            if not active.any():
                continue
            # sign rule first, the opposite sign for classes it did not help
            first = np.where(state.ref_mean < means, 1.0, -1.0) * active
            j_first = _trial_j(state, luts, key, steps[key] * first)
            ok_first = active & (j_first < j_cur)
            second = -first * (active & ~ok_first)
            j_second = _trial_j(state, luts, key, steps[key] * second)
            ok_second = active & ~ok_first & (j_second < j_cur)
            frozen[key] = frozen[key] | (active & ~ok_first & ~ok_second)
            direction = first * ok_first + second * ok_second
            if not direction.any():
                continue
            gain = np.where(ok_first, j_cur - j_first, j_cur - j_second)
            committed = _commit(state, luts, key, steps[key] * direction, gain, j_cur)
            if committed is None:
                frozen[key] = frozen[key] | (direction != 0)
                continue
            luts, j_cur, means = committed
            moved_any = True
            trace.append(state.weighted(j_cur))
        if not moved_any and all(frozen[k].all() for k in frozen):
            break

    luts, j_cur = _repair(state, luts, j_cur, j0, steps)
    if np.any(j_cur > j0 + _J_TOL):
        log.warning("ecb repair failed for %d classes; returning zero tables",
                    int(np.sum(j_cur > j0 + _J_TOL)))
        luts, j_cur = {"a": np.zeros(n), "b": np.zeros(n)}, j0
    trace.append(state.weighted(j_cur))
    if report is not None:
        report.traces["ecb"] = trace
    return luts["a"], luts["b"]


_J_TOL = 1e-9
_REPAIR_SCALES = (1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125)


def _trial_j(state: _EcbState, luts: dict, key: str, delta: np.ndarray) -> np.ndarray:
    trial = dict(luts)
    trial[key] = luts[key] + delta
    return state.objective(trial["a"], trial["b"])[0]


def _commit(state: _EcbState, luts: dict, key: str, delta: np.ndarray, gain: np.ndarray, j_cur: np.ndarray):
    """Apply the largest prefix (by individual gain) of ``delta`` that lowers the weighted objective."""
    order = [int(i) for i in np.argsort(-gain, kind="stable") if delta[i] != 0]
    base = state.weighted(j_cur)
    while order:
        mask = np.zeros(delta.size, dtype=bool)
        mask[order] = True
        trial = dict(luts)
        trial[key] = luts[key] + delta * mask
        j_new, m_new = state.objective(trial["a"], trial["b"])
        if state.weighted(j_new) < base:
            return trial, j_new, m_new
        order = order[: len(order) // 2]
    return None


def _repair(state: _EcbState, luts: dict, j_cur: np.ndarray, j0: np.ndarray, steps: dict, max_rounds: int = 50):
    """Nudge the entries of classes above ``j0`` until none is, or no move helps.

    Every round tries both tables, both signs and a ladder of shrinking
    steps on the violating classes only, and keeps, per class, the move
    that lowers its own objective most. The combined move is committed if it
    lowers the total excess over ``j0``.
    """

    def excess(j):
        return float(np.sum(np.maximum(j - j0 - _J_TOL, 0.0)))

    for _ in range(max_rounds):
        bad = j_cur > j0 + _J_TOL
        if not bad.any():
            break
        best_j = j_cur.copy()
        best_move = [None] * j_cur.size
        for key in ("a", "b"):
            for scale in _REPAIR_SCALES:
                for sign in (1.0, -1.0):
                    delta = sign * scale * steps[key] * bad
                    j_try = _trial_j(state, luts, key, delta)
                    better = bad & (j_try < best_j)
                    best_j = np.where(better, j_try, best_j)
                    for i in np.nonzero(better)[0]:
                        best_move[i] = (key, delta[i])
        trial = {k: v.copy() for k, v in luts.items()}
        for i, mv in enumerate(best_move):
            if mv is not None:
                trial[mv[0]][i] += mv[1]
        j_new, _ = state.objective(trial["a"], trial["b"])
        if excess(j_new) >= excess(j_cur):
            break
        luts, j_cur = trial, j_new
    return luts, j_cur


def _zero_model(cfg: TrainConfig) -> AguModel:
    return AguModel.zeros(cfg.n_classes, cfg.lam, cfg.kernel_cfg, cfg.clamp_log)


def warn_outliers(pairs) -> list[str]:
    """Warn about pairs whose guide noise exceeds twice the corpus median."""
    if len(pairs) < 2:
        return []
    noise = [noise_estimate(p.guide_hr) for p in pairs]
    med = float(np.median(noise))
    flagged = [p.name or str(i) for i, (p, v) in enumerate(zip(pairs, noise)) if med > 0 and v > 2 * med]
    for name in flagged:
        warnings.warn(f"pair {name} looks like an outlier (noise > 2x corpus median)", stacklevel=2)
    return flagged


def train_full(pairs, cfg: TrainConfig = TrainConfig()) -> tuple[AguModel, TrainReport]:
    """Run tau -> sigma -> xi -> ecb, each stage seeded with the previous ones.

    Stages listed in ``cfg.disable`` keep their all-zero tables. ``ecb`` is
    skipped when ``cfg.uf == 1``.
    """
    pairs = list(pairs)
    if not pairs:
        raise InvalidInputError("no training pairs given")
    warn_outliers(pairs)
    report = TrainReport()
    model = _zero_model(cfg)
    corpus = _Corpus(pairs, model, cfg.uf)
    report.edge_class_counts = corpus.edge_counts()
    report.brightness_class_counts = corpus.brightness_counts()

    if "tau" not in cfg.disable:
        model = model.copy(lut_tau=train_tau(corpus, cfg, model, report))
    if "sigma" not in cfg.disable:
        model = model.copy(lut_sigma=train_sigma(corpus, cfg, model.lut_tau, model, report))
    if "xi" not in cfg.disable:
        model = model.copy(lut_xi=train_xi(corpus, cfg, model.lut_tau, model.lut_sigma, model, report))
    if "ecb" not in cfg.disable:
        if cfg.uf > 1:
            ecb_a, ecb_b = train_ecb(corpus, cfg, model, report)
            model = model.copy(lut_ecb_a=ecb_a, lut_ecb_b=ecb_b)
        else:
            log.info("uf == 1: skipping ecb stage")
    model.provenance = {
        "train_config": cfg.to_dict(),
        "n_pairs": len(pairs),
        "final_losses": {k: float(v) for k, v in report.final_losses.items()},
    }
    return model, report
