"""Acceptance suite: one group of tests per criterion.

The conftest hook prints a PASS/FAIL line per criterion at the end of the
run. Tolerances below are the contract values and must not be relaxed.
"""

import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from images import random_luts, textured
from agu import AguModel, agu_apply, box_mean, clamp_xi, compute_ab, log_response, psnr, ssim
from agu.harness import METHODS, bench, run_method
from agu.imaging import bilinear_resize, map_channels, stub_enhancer
from agu.metrics import noise_estimate, sharpness
from agu.synthetic import render_scene
from agu.train import TrainConfig, synthetic_corpus, train_full

N_CASES = 50
ORACLE_TOL = 1e-3

# synthetic corpus shared by criteria 4-8: three 64x64 low-res pairs at uf=2
CORPUS = dict(n_pairs=3, size=(64, 64), uf=2.0, noise_sigma=4.0)
TRAIN_SEED, EVAL_SEED = 0, 1


@pytest.fixture(scope="module")
def trained():
    pairs = synthetic_corpus(seed=TRAIN_SEED, **CORPUS)
    model, report = train_full(pairs, TrainConfig(uf=2.0, seed=0))
    return model, report


@pytest.fixture(scope="module")
def eval_pairs():
    return synthetic_corpus(seed=EVAL_SEED, **CORPUS)


def _mean_sharpness(model, pairs):
    return float(np.mean([sharpness(agu_apply(p.guide_hr, p.input_lr, model)) for p in pairs]))


# -- 1 -------------------------------------------------------------------------

C1 = (1, "oracle equivalence of box_mean, compute_ab, clamp_xi, log_response, agu_apply")


@pytest.mark.criterion(*C1)
def test_c1_box_mean_matches_oracle():
    for seed in range(N_CASES):
        rng = np.random.default_rng(seed)
        img = rng.uniform(0, 255, (32, 32))
        r = int(rng.integers(1, 6))
        np.testing.assert_allclose(box_mean(img, r), oracles.box_mean(img, r), atol=ORACLE_TOL, rtol=0)


@pytest.mark.criterion(*C1)
def test_c1_compute_ab_matches_oracle():
    for seed in range(N_CASES):
        rng = np.random.default_rng(100 + seed)
        g = textured(rng, 32, 32)
        i = np.clip(0.7 * g + rng.normal(0, 10, g.shape) + 30, 0, 255)
        r = int(rng.integers(1, 5))
        eps = rng.uniform(0, 200, g.shape)
        got = compute_ab(i, g, r, eps)
        want = oracles.compute_ab(i, g, r, eps)
        np.testing.assert_allclose(got.a, want[0], atol=ORACLE_TOL, rtol=0)
        np.testing.assert_allclose(got.b, want[1], atol=ORACLE_TOL, rtol=0)


@pytest.mark.criterion(*C1)
def test_c1_clamp_xi_matches_oracle():
    for seed in range(N_CASES):
        rng = np.random.default_rng(200 + seed)
        g = rng.uniform(0, 255, (32, 32))
        xi = rng.uniform(-500, 500, g.shape)
        r = int(rng.integers(1, 5))
        np.testing.assert_allclose(clamp_xi(g, xi, r), oracles.clamp_xi(g, xi, r), atol=ORACLE_TOL, rtol=0)


@pytest.mark.criterion(*C1)
def test_c1_log_response_matches_oracle():
    for seed in range(N_CASES):
        rng = np.random.default_rng(300 + seed)
        img = rng.uniform(0, 255, (32, 32))
        np.testing.assert_allclose(log_response(img), oracles.log_response(img), atol=ORACLE_TOL, rtol=0)


@pytest.mark.criterion(*C1)
def test_c1_agu_apply_matches_oracle():
    for seed in range(N_CASES):
        rng = np.random.default_rng(400 + seed)
        guide = textured(rng, 64, 64, channels=3)
        inp = stub_enhancer(textured(rng, 32, 32, channels=3, noise=3.0) * 0.5)
        luts = random_luts(rng)
        model = AguModel(luts["sigma"], luts["xi"], luts["tau"], luts["ecb_a"], luts["ecb_b"])
        got = agu_apply(guide, inp, model)
        np.testing.assert_allclose(got, oracles.agu_apply(guide, inp, luts), atol=ORACLE_TOL, rtol=0)


# -- 2 -------------------------------------------------------------------------

C2 = (2, "identity configuration and constant images")


@pytest.mark.criterion(*C2)
def test_c2_identity_configuration():
    model = AguModel.zeros(lam=0.0)
    for seed in range(10):
        rng = np.random.default_rng(500 + seed)
        img = rng.uniform(0, 255, (40, 40, 3))
        out = agu_apply(img, img, model, uf=1)
        r = 2 * model.radius
        assert np.abs(out - img)[r:-r, r:-r].max() < 1e-3


@pytest.mark.criterion(*C2)
@pytest.mark.parametrize("same_res", [False, True])
@pytest.mark.parametrize("method", METHODS)
def test_c2_constant_images_stay_constant(method, same_res):
    rng = np.random.default_rng(7)
    model = AguModel(*random_luts(rng).values())
    guide = np.full((32, 32, 3), 40.0)
    inp = np.full((32, 32, 3) if same_res else (16, 16, 3), 150.0)
    out = run_method(method, guide, inp, model, same_res=same_res)
    assert out.shape == guide.shape
    assert np.ptp(out) < 1e-3
    # without class corrections on A and B the constant is the input's value
    out = run_method(method, guide, inp, model.disabled(["ecb"]), same_res=same_res)
    np.testing.assert_allclose(out, 150.0, atol=1e-3)


# -- 3 -------------------------------------------------------------------------

C3 = (3, "metric calibration: noise estimate, PSNR of +1 offset, SSIM self-similarity")


@pytest.mark.criterion(*C3)
@pytest.mark.parametrize("sigma", [3.0, 5.0, 8.0])
def test_c3_noise_estimator_recovers_sigma(sigma):
    estimates = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        img = 128.0 + rng.normal(0, sigma, (128, 128))
        estimates.append(noise_estimate(img))
    assert abs(np.mean(estimates) - sigma) / sigma < 0.15


@pytest.mark.criterion(*C3)
def test_c3_psnr_of_unit_offset():
    rng = np.random.default_rng(3)
    a = rng.uniform(0, 254, (64, 64))
    assert abs(psnr(a, a + 1.0) - 48.131) <= 0.001


@pytest.mark.criterion(*C3)
def test_c3_ssim_self_similarity():
    rng = np.random.default_rng(4)
    for _ in range(5):
        a = rng.uniform(0, 255, (48, 48))
        assert abs(ssim(a, a) - 1.0) <= 1e-9


# -- 4 -------------------------------------------------------------------------

C4 = (4, "AGU sharper than bilinear and less noisy than the input at uf=2")


@pytest.mark.criterion(*C4)
def test_c4_agu_beats_bilinear_and_input(trained, eval_pairs):
    model, _ = trained
    s_agu, s_bil, n_agu, n_in = [], [], [], []
    for p in eval_pairs:
        h, w = p.guide_hr.shape[:2]
        out = agu_apply(p.guide_hr, p.input_lr, model)
        bil = map_channels(lambda c: bilinear_resize(c, w, h), p.input_lr)
        s_agu.append(sharpness(out))
        s_bil.append(sharpness(bil))
        n_agu.append(noise_estimate(out))
        n_in.append(noise_estimate(p.input_lr))
    print(f"sharpness agu={np.mean(s_agu):.4f} bilinear={np.mean(s_bil):.4f}; "
          f"noise agu={np.mean(n_agu):.4f} input={np.mean(n_in):.4f}")
    assert np.mean(s_agu) > np.mean(s_bil)
    assert np.mean(n_agu) < np.mean(n_in)


# -- 5 -------------------------------------------------------------------------

C5 = (5, "tau ablation: at least 5% sharper with tau than with --disable tau")


@pytest.mark.criterion(*C5)
def test_c5_tau_improves_sharpness(trained, eval_pairs):
    model, _ = trained
    with_tau = _mean_sharpness(model, eval_pairs)
    without = _mean_sharpness(model.disabled(["tau"]), eval_pairs)
    gain = (with_tau - without) / without
    print(f"sharpness with tau={with_tau:.4f} without={without:.4f} relative gain={gain:+.2%}")
    assert gain >= 0.05


# -- 6 -------------------------------------------------------------------------

C6 = (6, "ecb ablation: --disable ecb lowers sharpness by at least 20%")


@pytest.mark.criterion(*C6)
def test_c6_ecb_improves_sharpness(trained, eval_pairs):
    model, _ = trained
    with_ecb = _mean_sharpness(model, eval_pairs)
    without = _mean_sharpness(model.disabled(["ecb"]), eval_pairs)
    drop = (with_ecb - without) / with_ecb
    print(f"sharpness with ecb={with_ecb:.4f} without={without:.4f} relative drop={drop:+.2%}")
    assert drop >= 0.20


# -- 7 -------------------------------------------------------------------------

C7 = (7, "every stage descends; training is bit-deterministic across thread counts")


@pytest.mark.criterion(*C7)
def test_c7_stage_losses_do_not_increase(trained):
    _, report = trained
    assert set(report.traces) == {"tau", "sigma", "xi", "ecb"}
    for stage, trace in report.traces.items():
        assert trace[-1] <= trace[0], stage


@pytest.mark.criterion(*C7)
def test_c7_deterministic_across_thread_counts(threads):
    pairs = synthetic_corpus(n_pairs=2, size=(32, 32), uf=2.0, noise_sigma=4.0, seed=5)
    cfg = TrainConfig(uf=2.0, seed=3, max_epochs=40, ecb_max_iters=20)
    dumps = []
    for n in sorted({1, 2, os.cpu_count() or 1, 8}):
        threads(n)
        model, _ = train_full(pairs, cfg)
        dumps.append(model.dumps())
    assert all(d == dumps[0] for d in dumps)


# -- 8 -------------------------------------------------------------------------

C8 = (8, "scale sweep: uf=2 keeps 85% of uf=1.5 sharpness, uf=4 below uf=2")


@pytest.mark.criterion(*C8)
def test_c8_scale_sweep(trained):
    model, _ = trained
    curve = {}
    for uf in (1.5, 2.0, 3.0, 4.0):
        pairs = synthetic_corpus(n_pairs=3, size=(64, 64), uf=uf, noise_sigma=4.0, seed=EVAL_SEED)
        outs = [agu_apply(p.guide_hr, p.input_lr, model) for p in pairs]
        curve[uf] = (np.mean([sharpness(o) for o in outs]), np.mean([noise_estimate(o) for o in outs]))
    for uf, (s, n) in curve.items():
        print(f"uf={uf:.1f} sharpness={s:.4f} noise={n:.4f}")
    assert curve[2.0][0] >= 0.85 * curve[1.5][0]
    assert curve[4.0][0] < curve[2.0][0]


# -- 9 -------------------------------------------------------------------------

C9 = (9, "runtime follows c1*uf^2 + c2 (R^2 >= 0.9); 1080p frame under 66.6 ms on the reference machine")


@pytest.mark.criterion(*C9)
def test_c9_quadratic_runtime_model():
    frame = render_scene(128, 128, seed=0)
    rows = bench(frame, AguModel.zeros(), [1.5, 2.0, 3.0, 4.0], reps=10)
    for r in rows:
        print(f"uf={r['uf']:.1f} mean={r['mean_ms']:.2f} ms")
    print(f"fit c1={rows[0]['fit_c1']:.3f} c2={rows[0]['fit_c2']:.3f} r2={rows[0]['fit_r2']:.4f}")
    assert rows[0]["fit_r2"] >= 0.9


@pytest.mark.criterion(*C9)
@pytest.mark.skipif(os.environ.get("AGU_REFERENCE_MACHINE") != "1",
                    reason="frame budget is only asserted on the reference machine (AGU_REFERENCE_MACHINE=1)")
def test_c9_frame_budget_1080p():
    frame = render_scene(960, 540, seed=0)
    rows = bench(frame, AguModel.zeros(), [2.0], reps=10)
    assert (rows[0]["width"], rows[0]["height"]) == (1920, 1080)
    assert rows[0]["mean_ms"] < 66.6


# -- 10 ------------------------------------------------------------------------

C10 = (10, "clamped sharpening offset stays inside the window range")

_finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


@st.composite
def guide_and_offset(draw):
    h = draw(st.integers(1, 16))
    w = draw(st.integers(1, 16))
    guide = draw(arrays(np.float64, (h, w), elements=st.floats(0, 255)))
    xi = draw(arrays(np.float64, (h, w), elements=_finite))
    return guide, xi, draw(st.integers(1, 4))


@pytest.mark.criterion(*C10)
@settings(max_examples=1000, deadline=None)
@given(guide_and_offset())
def test_c10_clamp_bounds_property(case):
    guide, xi, r = case
    lo, hi = oracles.window_min_max(guide, r)
    moved = guide + clamp_xi(guide, xi, r)
    # one ulp of slack for the subtraction/addition round trip
    slack = 1e-9 * np.maximum(1.0, np.abs(guide))
    assert np.all(moved >= lo - slack)
    assert np.all(moved <= hi + slack)
