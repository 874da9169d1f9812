import json

import numpy as np
import pytest

from deformslice import fileio
from deformslice.cli import RunConfig, ValidationError, main
from deformslice.dat_core import save_params, synthesize_params

SMALL = ["--set", "input.height=24", "--set", "input.width=24", "--set", "model.d_model=8"]
SMALL_SEARCH = SMALL + ["--set", "search.h_max=12", "--set", "search.w_max=12",
                        "--set", "search.iterations=4", "--set", "search.sample_size=8"]


def run(argv, tmp_path, name):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


class TestConfig:
    def test_defaults_validate(self):
        cfg = RunConfig.resolve()
        assert cfg.slice_config().as_tuple() == (28, 14, 1)
        assert len(cfg.search_space()) == 1323

    def test_file_then_overrides(self, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text("[slice]\nh_s = 20\nw_s = 20\n[cost]\nbit_width = 8\n")
        cfg = RunConfig.resolve(ini, ["slice.w_s=10"])
        assert cfg.slice_config().as_tuple() == (20, 10, 1)
        assert cfg.cost_params().bit_width == 8

    @pytest.mark.parametrize("override", ["slice.overlap=3", "nosuch.key=1", "model.n_heads=3",
                                          "slice.h_s=abc", "search.crossover_prob=2", "noequals"])
    def test_rejects(self, override):
        with pytest.raises(ValidationError):
            RunConfig.resolve(None, [override])


class TestForward:
    def test_full_equals_single_patch(self, tmp_path):
        c1, o1 = run(["forward", "--mode", "full", *SMALL], tmp_path, "full")
        c2, o2 = run(["forward", "--mode", "sliced", "--slice", "24,24,0", *SMALL], tmp_path, "sliced")
        assert c1 == c2 == 0
        assert (o1 / "output.fmap").read_bytes() == (o2 / "output.fmap").read_bytes()
        assert json.loads((o2 / "forward.json").read_text())["fidelity"] == 1.0

    def test_report_contents(self, tmp_path):
        code, out = run(["forward", "--slice", "8,6,2", *SMALL], tmp_path, "r")
        report = json.loads((out / "forward.json").read_text())
        assert code == 0
        assert report["trace"]["all_confined"] is True
        assert all(p["confined"] for p in report["trace"]["patches"])
        assert len(report["trace"]["patches"]) == 3 * 4
        assert report["config"]["slice.w_s"] == 6 and report["config"]["input.height"] == 24
        assert 0.0 <= report["fidelity"] <= 1.0
        assert fileio.load_tensor(out / "output.fmap").shape == (8, 24, 24)

    def test_input_and_weights_files(self, tmp_path):
        x = np.random.default_rng(0).standard_normal((8, 12, 12))
        fileio.save_tensor(tmp_path / "x.fmap", x)
        save_params(tmp_path / "w.datp", synthesize_params(d_model=8, n_heads=2, n_points=4, seed=2))
        code, out = run(["forward", "--input", str(tmp_path / "x.fmap"), "--weights",
                         str(tmp_path / "w.datp"), "--slice", "6,6,1", *SMALL], tmp_path, "io")
        assert code == 0
        assert fileio.load_tensor(out / "output.fmap").shape == (8, 12, 12)

    def test_bad_input_file(self, tmp_path):
        (tmp_path / "bad.fmap").write_bytes(b"nope")
        code, _ = run(["forward", "--input", str(tmp_path / "bad.fmap"), *SMALL], tmp_path, "x")
        assert code == 2
        code, _ = run(["forward", "--input", str(tmp_path / "missing.fmap"), *SMALL], tmp_path, "y")
        assert code == 2

    def test_validation_exit_code(self, tmp_path, capsys):
        code, _ = run(["forward", "--set", "slice.overlap=5"], tmp_path, "v")
        assert code == 1
        assert "invalid configuration" in capsys.readouterr().err


class TestCost:
    def test_paper_slice_and_ordering(self, tmp_path):
        code, out = run(["cost", "--slice", "28,14,1"], tmp_path, "c")
        report = json.loads((out / "cost.json").read_text())
        assert code == 0
        assert report["resource"] == 6960
        assert report["traffic"]["baseline"]["normalized"] == 1.0
        assert report["ordering"] == ["sliced", "fused", "baseline"]
        assert report["config"]["cost.bit_width"] == 16

    def test_single_mode(self, tmp_path):
        code, out = run(["cost", "--mode", "baseline"], tmp_path, "b")
        report = json.loads((out / "cost.json").read_text())
        assert list(report["traffic"]) == ["baseline"]
        assert report["traffic"]["baseline"]["normalized"] == 1.0


class TestSearch:
    def test_outputs(self, tmp_path):
        code, out = run(["search", "--seed", "3", *SMALL_SEARCH], tmp_path, "s")
        assert code == 0
        rows = (out / "front.csv").read_text().splitlines()
        report = json.loads((out / "front.json").read_text())
        assert rows[0] == "h_s,w_s,overlap,fidelity,resource"
        assert len(rows) - 1 == report["front"]["size"] > 0
        assert report["config"]["search.seed"] == 3
        svg = (out / "front.svg").read_text()
        assert svg.startswith("<svg") and svg.count('fill="#c0392b"') == report["front"]["size"]

    def test_csv_deterministic(self, tmp_path):
        blobs = []
        for i in range(3):
            _, out = run(["search", "--seed", "1", *SMALL_SEARCH], tmp_path, f"d{i}")
            blobs.append((out / "front.csv").read_bytes())
        assert blobs[0] == blobs[1] == blobs[2]

    def test_oracle_audit(self, tmp_path):
        code, out = run(["search", "--oracle", *SMALL_SEARCH, "--set", "search.iterations=10"],
                        tmp_path, "o")
        report = json.loads((out / "front.json").read_text())
        audit = report["oracle"]["audit"]
        assert code == 0
        assert audit["oracle_size"] == report["oracle"]["front"]["size"]
        # 10 x 8 samples cover the 75-config space: fronts coincide
        assert audit["set_equal"] and audit["n_dominated"] == 0

    def test_empty_feasible_region_exit_code(self, tmp_path, capsys):
        code, out = run(["search", *SMALL_SEARCH, "--set", "search.r_min=1", "--set", "search.r_max=2"],
                        tmp_path, "e")
        assert code == 3
        assert "[1, 2]" in capsys.readouterr().err
        assert (out / "front.csv").read_text() == "h_s,w_s,overlap,fidelity,resource\n"

    def test_synthetic_evaluator(self, tmp_path):
        code, out = run(["search", "--set", "search.evaluator=synthetic", "--set", "search.iterations=5"],
                        tmp_path, "syn")
        assert code == 0
