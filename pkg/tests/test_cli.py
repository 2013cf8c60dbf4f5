import json
import math
import re

import numpy as np
import pytest

from agu.cli import main
from agu.imaging import KernelConfig, log_kernel
from agu.io import read_image, write_image
from agu.model import AguModel

FAST_TRAIN = ["--max-epochs", "20", "--ecb-max-iters", "10"]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    assert main(["synth", "--out", str(root), "--size", "24x24", "--count", "2", "--noise", "4"]) == 0
    return root


@pytest.fixture(scope="module")
def model_path(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("model") / "m.json"
    assert main(["train", str(corpus), "--out", str(out), *FAST_TRAIN]) == 0
    return out


def _metrics(text, label):
    line = next(l for l in text.splitlines() if l.startswith(label + ":"))
    return {k: float(v) for k, v in re.findall(r"(\w+)=([-\w.]+)", line)}


class TestTrain:
    def test_writes_model_and_losses(self, model_path):
        doc = json.loads(model_path.read_text())
        for name in ("lut_sigma", "lut_xi", "lut_tau", "lut_ecb_a", "lut_ecb_b"):
            assert len(doc[name]) == 121
        losses = (model_path.parent / "m_losses.csv").read_text().splitlines()
        assert losses[0] == "stage,step,loss"
        assert {l.split(",")[0] for l in losses[1:]} == {"tau", "sigma", "xi", "ecb"}

    def test_repeatable(self, corpus, model_path, tmp_path):
        again = tmp_path / "again.json"
        assert main(["train", str(corpus), "--out", str(again), *FAST_TRAIN]) == 0
        assert again.read_bytes() == model_path.read_bytes()

    def test_empty_directory(self, tmp_path, capsys):
        (tmp_path / "low").mkdir()
        (tmp_path / "high").mkdir()
        assert main(["train", str(tmp_path), "--out", str(tmp_path / "m.json")]) == 2
        assert str(tmp_path) in capsys.readouterr().err

    def test_unknown_stage(self, corpus, tmp_path):
        assert main(["train", str(corpus), "--out", str(tmp_path / "m.json"), "--disable", "gamma"]) == 2


class TestApply:
    def test_identity_configuration(self, tmp_path, rng, capsys):
        guide = rng.integers(0, 256, (32, 32)).astype(np.float64)
        write_image(tmp_path / "g.png", guide)
        AguModel.zeros(lam=0.0).save(tmp_path / "id.json")
        code = main(["apply", str(tmp_path / "g.png"), "--input", str(tmp_path / "g.png"), "--uf", "1",
                     "--model", str(tmp_path / "id.json"), "--out", str(tmp_path / "o.png")])
        assert code == 0
        assert _metrics(capsys.readouterr().out, "output")["psnr"] > 50

    def test_full_hd_dimensions(self, tmp_path, rng):
        write_image(tmp_path / "g.png", rng.integers(0, 60, (1080, 1920, 3)))
        assert main(["apply", str(tmp_path / "g.png"), "--out", str(tmp_path / "o.png")]) == 0
        assert read_image(tmp_path / "o.png").shape == (1080, 1920, 3)

    def test_reported_metrics_match_saved_file(self, corpus, model_path, tmp_path, capsys):
        out = tmp_path / "o.png"
        guide = corpus / "low" / "scene_000.png"
        assert main(["apply", str(guide), "--model", str(model_path), "--out", str(out)]) == 0
        reported = _metrics(capsys.readouterr().out, "output")
        assert main(["metrics", str(out)]) == 0
        header, row = capsys.readouterr().out.strip().splitlines()
        saved = dict(zip(header.split(","), row.split(",")))
        # 8-bit rounding moves each luma value by at most 0.5
        kernel_l1 = np.abs(log_kernel(KernelConfig().log_sigma, KernelConfig().log_size)).sum()
        assert abs(float(saved["sharpness"]) - reported["sharpness"]) <= 0.5 * kernel_l1
        assert abs(float(saved["noise"]) - reported["noise"]) <= math.sqrt(math.pi / 2) * 8 / 6

    def test_dump_classes(self, corpus, tmp_path):
        code = main(["apply", str(corpus / "low" / "scene_000.png"), "--out", str(tmp_path / "o.png"),
                     "--dump-classes", str(tmp_path / "cls")])
        assert code == 0
        assert read_image(tmp_path / "cls" / "edge_classes.png").shape == (24, 24, 3)
        assert read_image(tmp_path / "cls" / "brightness_classes.png").shape == (12, 12, 3)

    def test_same_res_and_baselines(self, corpus, model_path, tmp_path):
        g = str(corpus / "low" / "scene_001.png")
        for method in ("agu", "agf", "fgf", "bf", "bilinear"):
            out = tmp_path / f"{method}.png"
            assert main(["apply", g, "--same-res", "--method", method, "--model", str(model_path),
                         "--out", str(out)]) == 0
            assert read_image(out).shape == (24, 24, 3)


class TestCompare:
    def test_csv_output(self, corpus, model_path, tmp_path):
        out = tmp_path / "c.csv"
        assert main(["compare", str(corpus), "--model", str(model_path), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "method,sharpness,noise,psnr,ssim"
        assert [l.split(",")[0] for l in lines[1:]] == ["input", "agu", "agf", "fgf", "bf", "bilinear"]

    def test_without_model_skips_learned_methods(self, corpus, capsys):
        assert main(["compare", str(corpus), "--method", "bf,bilinear", "--same-res"]) == 0
        rows = capsys.readouterr().out.strip().splitlines()
        assert [r.split(",")[0] for r in rows[1:]] == ["input", "bf", "bilinear"]


class TestExitCodes:
    def test_unknown_method_lists_valid(self, corpus, capsys):
        assert main(["compare", str(corpus), "--method", "lanczos"]) == 2
        assert "bilinear" in capsys.readouterr().err

    def test_empty_method_list(self, corpus):
        assert main(["compare", str(corpus), "--method", ","]) == 2

    def test_learned_method_without_model(self, corpus):
        assert main(["compare", str(corpus), "--method", "agu"]) == 2

    def test_missing_model_file(self, corpus, tmp_path):
        assert main(["apply", str(corpus / "low" / "scene_000.png"), "--model", str(tmp_path / "none.json"),
                     "--out", str(tmp_path / "o.png")]) == 2

    def test_corrupt_model(self, corpus, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        assert main(["apply", str(corpus / "low" / "scene_000.png"), "--model", str(bad),
                     "--out", str(tmp_path / "o.png")]) == 1

    def test_bogus_disable(self, corpus, tmp_path):
        assert main(["apply", str(corpus / "low" / "scene_000.png"), "--disable", "nope",
                     "--out", str(tmp_path / "o.png")]) == 2

    @pytest.mark.parametrize("extra", [["--reps", "9"], ["--uf", "5"], ["--uf", "2,0.5"]])
    def test_bench_arguments(self, corpus, extra):
        assert main(["bench", str(corpus / "low" / "scene_000.png"), *extra]) == 2

    def test_uf_out_of_range(self, corpus, tmp_path):
        assert main(["apply", str(corpus / "low" / "scene_000.png"), "--uf", "5", "--out", str(tmp_path / "o.png")]) == 2

    def test_unreadable_image(self, tmp_path):
        bad = tmp_path / "x.png"
        bad.write_bytes(b"junk")
        assert main(["metrics", str(bad)]) == 1

    def test_no_command(self):
        assert main([]) == 2


def test_bench_csv(corpus, tmp_path):
    out = tmp_path / "b.csv"
    assert main(["bench", str(corpus / "low" / "scene_000.png"), "--uf", "1,2", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("uf,width,height,reps,mean_ms")
    assert len(lines) == 3


def test_metrics_with_reference(corpus, capsys):
    img = str(corpus / "high" / "scene_000.png")
    assert main(["metrics", img, "--ref", img]) == 0
    header, row = capsys.readouterr().out.strip().splitlines()
    assert dict(zip(header.split(","), row.split(",")))["psnr"] == "inf"


def test_synth_from_directory(corpus, tmp_path):
    assert main(["synth", str(corpus / "high"), "--out", str(tmp_path / "s"), "--noise", "0",
                 "--gain", "1", "--gamma", "1"]) == 0
    a = read_image(tmp_path / "s" / "low" / "scene_000.png")
    np.testing.assert_array_equal(a, read_image(corpus / "high" / "scene_000.png"))
