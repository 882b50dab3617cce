"""End-to-end runs of every subcommand plus the exit-code contract."""

import json

import numpy as np
import pytest

from romforge.cli import main

SMALL_AE = ["--sol-latent", "3", "--sol-channels", "4,8", "--sol-strides",
            "1,2", "--sol-epochs", "3", "--sol-batch", "4",
            "--dom-latent", "3", "--dom-channels", "4,8", "--dom-strides",
            "1,2", "--dom-epochs", "3", "--dom-batch", "4",
            "--phi-layers", "1", "--phi-neurons", "16", "--phi-epochs", "10",
            "--phi-batch", "4"]


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    """One tiny generate + offline chain shared by the read-only tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    bundle = root / "bundle"
    assert main(["generate", "--problem", "holes", "--count", "8",
                 "--grid", "16", "--seed", "7", "--out", str(data)]) == 0
    assert main(["offline", "--train", str(data), "--out", str(bundle),
                 "--mode", "learned_only", "--seed", "1"] + SMALL_AE) == 0
    return root


class TestGenerate:
    def test_reruns_are_byte_identical(self, tmp_path):
        args = ["generate", "--problem", "ellipse", "--count", "4",
                "--grid", "16", "--seed", "3"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert "manifest.json" in names and "config.json" in names
        for name in names:
            assert ((tmp_path / "a" / name).read_bytes()
                    == (tmp_path / "b" / name).read_bytes())

    def test_bitmaps_only_has_no_solutions(self, tmp_path):
        out = tmp_path / "bm"
        assert main(["generate", "--problem", "holes", "--count", "4",
                     "--grid", "16", "--seed", "0", "--out", str(out),
                     "--bitmaps-only"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["has_solutions"] is False
        assert "solutions.f32le" not in manifest["sha256"]


class TestOnline:
    def test_dataset_predictions(self, work, tmp_path):
        out = tmp_path / "pred"
        assert main(["online", "--bundle", str(work / "bundle"),
                     "--data", str(work / "data"), "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["format"] == "romforge-predictions"
        assert manifest["count"] == 8
        raw = np.fromfile(out / "predictions.f32le", dtype="<f4")
        assert raw.size == 8 * 16 * 16
        assert np.all(np.isfinite(raw))

    def test_single_index(self, work, tmp_path):
        out = tmp_path / "one"
        assert main(["online", "--bundle", str(work / "bundle"),
                     "--data", str(work / "data"), "--index", "2",
                     "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["count"] == 1

    def test_custom_domain(self, work, tmp_path):
        spec = {"holes": [{"kind": "circle", "center": [0.5, 0.5],
                           "half_axes": [0.15, 0.15]}]}
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(spec))
        out = tmp_path / "custom"
        assert main(["online", "--bundle", str(work / "bundle"),
                     "--domain-json", str(spec_path),
                     "--params", "1.0,2.5", "--out", str(out)]) == 0
        raw = np.fromfile(out / "predictions.f32le", dtype="<f4")
        assert raw.size == 16 * 16

    def test_params_dimension_error(self, work, tmp_path):
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps({"holes": [
            {"kind": "circle", "center": [0.5, 0.5], "half_axes": [0.1, 0.1]}
        ]}))
        code = main(["online", "--bundle", str(work / "bundle"),
                     "--domain-json", str(spec_path),
                     "--params", "1.0,2.0,3.0", "--out", str(tmp_path / "x")])
        assert code == 2


class TestEval:
    def test_report(self, work, tmp_path):
        out = tmp_path / "report.json"
        assert main(["eval", "--bundle", str(work / "bundle"),
                     "--data", str(work / "data"), "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["count"] == 8
        assert report["worst_relative_error"] >= report["mean_relative_error"] \
            >= report["best_relative_error"]
        text = out.read_text()
        assert "/tmp" not in text and "/root" not in text


class TestGridsearch:
    def test_budgeted_sweep(self, work, tmp_path):
        out = tmp_path / "grid.json"
        assert main(["gridsearch", "--data", str(work / "data"),
                     "--reuse", str(work / "bundle"), "--epochs", "5",
                     "--budget", "3", "--seed", "2", "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["total_candidates"] == 4200
        assert len(report["ranking"]) == 3

    def test_custom_menus(self, work, tmp_path):
        menus = {"hidden_layers": [1], "neurons": [8], "dropout": [0.0],
                 "max_lr": [1e-3, 1e-4], "batch_size": [4]}
        menus_path = tmp_path / "menus.json"
        menus_path.write_text(json.dumps(menus))
        out = tmp_path / "grid.json"
        assert main(["gridsearch", "--data", str(work / "data"),
                     "--reuse", str(work / "bundle"), "--epochs", "5",
                     "--menus", str(menus_path), "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["total_candidates"] == 2
        assert report["evaluated"] == 2


class TestSensitivity:
    def test_sweep_on_reference_domain(self, work, tmp_path):
        out = tmp_path / "sens.json"
        assert main(["sensitivity", "--bundle", str(work / "bundle"),
                     "--ratios", "1,0.9", "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert [row["ratio"] for row in report["rows"]] == [1.0, 0.9]
        assert all(np.isfinite(row["relative_error"])
                   for row in report["rows"])


class TestExitCodes:
    def test_usage_errors_exit_1(self):
        with pytest.raises(SystemExit) as exc:
            main(["no-such-command"])
        assert exc.value.code == 1
        with pytest.raises(SystemExit) as exc:
            main(["generate", "--problem", "ellipse"])
        assert exc.value.code == 1

    def test_missing_dataset_exits_2(self, tmp_path):
        code = main(["offline", "--train", str(tmp_path / "nope"),
                     "--out", str(tmp_path / "b")] + SMALL_AE)
        assert code == 2

    def test_diverging_training_exits_3(self, work, tmp_path):
        with np.errstate(over="ignore", invalid="ignore"):
            code = main(["offline", "--train", str(work / "data"),
                         "--out", str(tmp_path / "b"), "--seed", "1",
                         "--reuse", str(work / "bundle"),
                         "--phi-layers", "1", "--phi-neurons", "16",
                         "--phi-epochs", "5", "--phi-batch", "4",
                         "--phi-lr", "1e25"])
        assert code == 3
