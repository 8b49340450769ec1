import json

import numpy as np
import pytest

from twofluid.cli import closure_eval, main
from twofluid.config import OUTPUT_ENV, RunConfig
from twofluid.errors import ConfigError

FAST = ["--set", "nodes = 17", "--set", "dt = 0.02", "--set", "window_T = 0.1",
        "--set", "horizon = 0.2"]


def run(argv, tmp_path, name="run"):
    code = main(argv + ["--output", str(tmp_path), "--set", f"run_name = {name}"])
    return code, tmp_path / name


class TestClosureCommand:
    def test_golden_value(self, capsys):
        assert main(["closure", "eval", "--r", "1", "--q", "1"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["Z"] == pytest.approx((1 + 5**0.5) / 2, rel=1e-13)
        assert set(out) == {"Z", "alpha", "p", "dZ_dR", "dZ_dQ", "omega1", "omega2"}

    def test_domain_error_exit(self, capsys):
        assert main(["closure", "eval", "--r", "-1", "--q", "1"]) == 2

    def test_eval_function(self):
        out = closure_eval(0.0, 4.0, 3.0, 1.5)
        assert out["Z"] == pytest.approx(2.0) and out["alpha"] == 0


class TestConfig:
    def test_round_trip(self):
        cfg = RunConfig.from_text("nodes = 9 9\nmu = 2.5\nperiodic = false\n")
        again = RunConfig.from_text(cfg.to_text())
        assert again == cfg and again.digest() == cfg.digest()
        assert cfg.nodes == (9, 9)

    def test_unknown_key_reports_line(self):
        with pytest.raises(ConfigError, match=r"run.cfg:2: unknown key 'viscosity'"):
            RunConfig.from_text("mu = 1\nviscosity = 2\n", "run.cfg")

    def test_malformed_line(self):
        with pytest.raises(ConfigError, match=":1:"):
            RunConfig.from_text("mu 1\n")
        with pytest.raises(ConfigError, match="bad value"):
            RunConfig.from_text("mu = fast\n")

    def test_invalid_combination(self):
        with pytest.raises(ConfigError):
            RunConfig.from_text("window_T = 0.1\ndt = 0.03\n")
        with pytest.raises(ConfigError):
            RunConfig.from_text("gamma_minus = 0.5\n")

    def test_comments_and_overrides(self):
        cfg = RunConfig.from_text("# header\nmu = 1  # inline\n", overrides=["mu = 3"])
        assert cfg.mu == 3.0

    def test_config_file_exit_code(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("nodes = 17\nunknown_key = 1\n")
        assert main(["simulate", "--config", str(bad)]) == 2


class TestSimulate:
    def test_rest_state_is_steady(self, tmp_path):
        code, d = run(["simulate"] + FAST + ["--set", "amplitude = 0"], tmp_path)
        assert code == 0
        rep = json.loads((d / "report.json").read_text())
        assert rep["x_norm"] == 0 and rep["grad_budget"] == 0
        man = json.loads((d / "manifest.json").read_text())
        assert man["exit_code"] == 0
        assert {"report.json", "timeseries.csv", "iteration_trace.csv",
                "checkpoint.npz", "config.txt"} <= set(man["outputs"])
        cfg = RunConfig.from_file(d / "config.txt")
        assert man["config_sha256"] == cfg.digest()

    def test_byte_reproducible(self, tmp_path):
        argv = ["simulate"] + FAST + ["--set", "perturb = both"]
        run(argv, tmp_path, "a")
        run(argv, tmp_path, "b")
        for name in ("timeseries.csv", "iteration_trace.csv", "report.json",
                     "snap_000000_nodes.csv", "snap_000010_cells.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_budget_violation_exits_3(self, tmp_path):
        code, d = run(["simulate"] + FAST + ["--set", "perturb = velocity",
                                             "--set", "amplitude = 0.5"], tmp_path)
        assert code == 3
        fail = json.loads((d / "failure.json").read_text())
        assert fail["error"] == "SmallnessError" and fail["budget"] > fail["delta"]
        assert json.loads((d / "manifest.json").read_text())["exit_code"] == 3

    def test_environment_output_root(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
        assert main(["simulate"] + FAST + ["--set", "amplitude = 0"]) == 0
        assert (tmp_path / "env" / "simulate" / "manifest.json").exists()

    def test_matrix_dump(self, tmp_path):
        code, d = run(["simulate"] + FAST + ["--set", "dump_matrix = true"], tmp_path)
        assert code == 0
        assert (d / "operator.mtx").read_text().startswith("%%MatrixMarket")

    def test_restart_matches_full_run(self, tmp_path):
        run(["simulate"] + FAST + ["--set", "horizon = 0.1"], tmp_path, "part")
        code, _ = run(["simulate"] + FAST + ["--restart", str(tmp_path / "part" / "checkpoint.npz")],
                      tmp_path, "resumed")
        assert code == 0
        run(["simulate"] + FAST, tmp_path, "full")
        a = (tmp_path / "full" / "timeseries.csv").read_bytes()
        b = (tmp_path / "resumed" / "timeseries.csv").read_bytes()
        assert a == b


class TestOtherCommands:
    def test_decay_spectrum(self, tmp_path):
        code, d = run(["decay-spectrum", "--set", "nodes = 17"], tmp_path)
        assert code == 0
        s = json.loads((d / "summary.json").read_text())
        assert s["beta_hat"] > 0

    def test_resolvent_periodic(self, tmp_path):
        code, d = run(["resolvent", "--set", "nodes = 16", "--set", "periodic = true",
                       "--set", "sector_radii = 4", "--set", "sector_rays = 3"], tmp_path)
        assert code == 0
        lines = (d / "resolvent.csv").read_text().splitlines()
        assert len(lines) == 1 + 12

    def test_decay_short(self, tmp_path):
        code, d = run(["decay", "--set", "nodes = 17", "--set", "dt = 0.05",
                       "--set", "window_T = 0.5", "--set", "horizon = 2",
                       "--set", "amplitude = 1e-3", "--set", "perturb = both"], tmp_path)
        assert code == 0
        rep = json.loads((d / "report.json").read_text())
        assert rep["beta_fit"] > 0

    def test_mms(self, tmp_path):
        code, d = run(["mms", "--set", "mms_nodes = 9 17", "--set", "mms_dts = 0.2 0.1",
                       "--set", "mms_fine_nodes = 33"], tmp_path)
        assert code == 0
        assert (d / "mms_space.csv").exists()
