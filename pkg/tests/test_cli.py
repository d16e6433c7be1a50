"""
Tests for the command-line entry point and the output writer.

Core claims:
    - constants prints kappa, K, ell and E[exp(gamma S_inf)] as JSON
    - The wired negative control exits 2 and its report validates against the
      published field set
    - Reruns with the same seed write byte-identical files for any thread count
    - Outputs are written atomically and nothing else is left in the directory
    - Configuration errors exit 1 with the offending field on stderr
"""

import json
import math
from pathlib import Path

import pytest
from pytest import approx

from core.special_fn import EULER_GAMMA
from main import main
from services.report_generator import PLOTDATA_HEADER, CoalgeneReportWriter, format_cell

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(autouse=True)
def quiet_environment(monkeypatch):
    for name in ("COALGENE_TRACE", "COALGENE_THREADS", "COALGENE_LOG"):
        monkeypatch.delenv(name, raising=False)


class TestCommands:
    def test_constants(self, capsys):
        code = main(["constants", "--alpha", "0.5", "--theta", "0", "--gamma", "0.5"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        constants = payload["constants"]
        assert set(constants) == {"kappa", "K", "ell", "E_exp_gamma_S_inf"}
        assert constants["kappa"] == approx(EULER_GAMMA, rel=1e-12)
        assert constants["K"] == approx(math.exp(EULER_GAMMA), rel=1e-12)
        expected = math.exp(0.5 * EULER_GAMMA) / math.gamma(1.5)
        assert constants["E_exp_gamma_S_inf"] == approx(expected, rel=1e-12)
        assert constants["ell"] == approx(1.0, rel=1e-12)

    def test_exponential_constants(self, capsys):
        code = main(["constants", "--config", str(CONFIGS / "exponential_theorem.json")])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["coincide"] is True
        assert set(payload["constants"]) == {"kappa", "K", "ell", "E_exp_gamma_S_inf"}
        assert payload["em_theorem"]["displayed"] == approx(payload["em_theorem"]["specialized"], rel=1e-9)

    def test_rates(self, capsys):
        assert main(["rates", "--measure", "kingman", "--n", "3"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines == ["n_blocks,b,rate", "2,2,1", "3,2,1", "3,3,0"]

    def test_beta_rates(self, capsys):
        assert main(["rates", "--measure", "beta:1,1", "--n", "3"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "n_blocks,b,rate"
        table = {(int(m), int(b)): float(rate) for m, b, rate in (line.split(",") for line in lines[1:])}
        assert table == approx({(2, 2): 1.0, (3, 2): 0.5, (3, 3): 0.5}, rel=1e-10)

    def test_xi_rates(self, capsys):
        assert main(["rates", "--measure", "xi:1@0.5/0.5", "--n", "3"]) == 0
        out = capsys.readouterr().out
        lines = out.splitlines()
        assert lines[0] == "pi_prime,rate"
        assert len(lines) == 1 + 4
        assert '"1,2,3"' in out

    def test_negative_control_exits_2(self, capsys):
        code = main(["check", "lambda-criterion", "--config", str(CONFIGS / "lambda_negative_control.json"), "--threads", "1"])
        assert code == 2
        report = json.loads(capsys.readouterr().out)
        assert report["verdict"] == "fail"
        assert set(report) == {"name", "params", "rows", "verdict", "tolerance_policy", "notes"}

    def test_plotdata(self, capsys):
        code = main(["plotdata", "lambda-criterion", "--config", str(CONFIGS / "lambda_negative_control.json"), "--threads", "1"])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == ",".join(PLOTDATA_HEADER)
        assert all(line.split(",")[0] in {"3", "10"} for line in lines[1:])

    def test_estimate_cn(self, tmp_path, capsys):
        path = tmp_path / "cn.json"
        path.write_text(json.dumps({"command": "estimate-cn", "model": {"kind": "wright_fisher"}, "run": {"seed": 4}}))
        code = main(["estimate-cn", "--config", str(path), "--N", "4", "--reps", "10", "--threads", "1"])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "quantity,value,stderr,reps,seed"
        assert lines[1].startswith("c_N exact N=4,0.25,")


class TestDeterminism:
    def test_byte_identical_reruns(self, tmp_path):
        config = str(CONFIGS / "kingman_demo.json")
        outputs = []
        for threads, name in (("1", "a.csv"), ("1", "b.csv"), ("2", "c.csv")):
            target = tmp_path / name
            assert main(["simulate", "--config", config, "--reps", "64", "--threads", threads, "--out", str(target)]) == 0
            outputs.append(target.read_bytes())
        assert outputs[0] == outputs[1] == outputs[2]
        assert outputs[0].startswith(b"replicate,generation,n_blocks,partition\n")

    def test_seed_changes_output(self, tmp_path):
        config = str(CONFIGS / "kingman_demo.json")
        main(["simulate", "--config", config, "--threads", "1", "--out", str(tmp_path / "a.csv")])
        main(["simulate", "--config", config, "--seed", "1", "--threads", "1", "--out", str(tmp_path / "b.csv")])
        assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "b.csv").read_bytes()


class TestErrors:
    def test_gamma_range_exits_1(self, capsys):
        assert main(["constants", "--alpha", "0.5", "--theta", "0", "--gamma", "0.2"]) == 1
        err = capsys.readouterr().err
        assert err.startswith("ERROR: model.gamma:")
        assert "alpha/2 < gamma <= alpha" in err

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["rates", "--config", str(tmp_path / "missing.json")]) == 1
        assert "cannot read config" in capsys.readouterr().err

    def test_missing_seed(self, tmp_path, capsys):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"command": "simulate", "model": {"kind": "wright_fisher"}, "run": {"N": 10}}))
        assert main(["simulate", "--config", str(path)]) == 1
        assert "run.seed" in capsys.readouterr().err

    def test_domain_error_in_run(self, capsys):
        assert main(["rates", "--n", "3"]) == 1
        assert "limit" in capsys.readouterr().err


class TestWriter:
    def test_atomic_write_leaves_only_target(self, tmp_path):
        target = tmp_path / "nested" / "out.csv"
        CoalgeneReportWriter().write_atomic("a,b\n", target)
        assert target.read_text() == "a,b\n"
        assert list(target.parent.iterdir()) == [target]

    def test_unwritable_destination(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError, match="cannot write"):
            CoalgeneReportWriter().write_atomic("data", blocker / "out.csv")

    def test_cells(self):
        assert format_cell(None) == ""
        assert format_cell(True) == "true"
        assert format_cell(0.1) == "0.10000000000000001"
        assert format_cell(3) == "3"

    def test_json_rejects_nan(self):
        with pytest.raises(ValueError):
            CoalgeneReportWriter().render_json({"x": float("nan")})


class TestRunManager:
    def test_callbacks(self):
        from core.run_manager import CoalgeneRunManager
        from services.config_parser import build_config

        progress, outputs, errors = [], [], []
        manager = CoalgeneRunManager(
            progress_callback=lambda step, pct, data: progress.append((step, pct)),
            output_callback=lambda source, content, kind: outputs.append((source, kind)),
            error_callback=errors.append,
        )
        config = build_config({"command": "rates", "limit": "kingman", "run": {"n": 2}})
        assert manager.run(config, threads=1) == 0
        assert [pct for _, pct in progress] == [0, 100]
        assert outputs[0][0] == "rates"
        assert not errors

    def test_error_callback(self):
        from core.run_manager import CoalgeneRunManager
        from services.config_parser import build_config

        errors = []
        manager = CoalgeneRunManager(error_callback=errors.append)
        assert manager.run(build_config({"command": "rates", "run": {"n": 3}}), threads=1) == 1
        assert "limit" in errors[0]
