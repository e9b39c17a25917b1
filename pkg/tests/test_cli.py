import json
import subprocess
import sys
from pathlib import Path

import pytest

from kernelpde import cli, harness, hjb


def test_solve(capsys):
    assert cli.main(["solve", "--d", "2", "--M", "60", "--n-test", "50", "--max-iters", "6"]) == 0
    out = capsys.readouterr().out
    assert "rms_test_error" in out and "max_collocation_residual" in out
    assert len(out.split("iteration_history")[1].split()) == 6


def test_solve_relaxed_variant(capsys):
    assert cli.main(["solve", "--problem", "darcy_tanh", "--M", "40", "--variant", "gn_relaxed", "--max-iters", "3", "--n-test", "20"]) == 0
    assert "rms_test_error" in capsys.readouterr().out


def test_convergence_with_config(tmp_path, capsys):
    cfg = tmp_path / "conv.json"
    cfg.write_text(json.dumps({"dims": [2], "M_list": [30, 60], "seeds": [0], "n_test": 50, "probes": 500}))
    out_dir = tmp_path / "out"
    assert cli.main(["convergence", "--config", str(cfg), "--seeds", "0,1", "--output-dir", str(out_dir)]) == 0
    out = capsys.readouterr().out
    assert "d=2 M=30" in out and "slope vs M" in out
    man = json.loads((out_dir / "manifest.json").read_text())
    assert man["config"]["seeds"] == [0, 1]


def test_convergence_failure_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({
        "dims": [2], "M_list": [30], "seeds": [0], "n_test": 20, "probes": 100,
        "kernel": {"family": "matern", "nu": 0.5, "lengthscale": 0.3},
    }))
    assert cli.main(["convergence", "--config", str(cfg)]) == 1
    assert "FAILED cell" in capsys.readouterr().err


def test_filldist(tmp_path, capsys):
    assert cli.main(["filldist", "--dims", "1", "--M-list", "16,64", "--seeds", "0", "--probes", "2000", "--output-dir", str(tmp_path)]) == 0
    assert "expected -1.0000" in capsys.readouterr().out
    assert (tmp_path / "filldist.csv").exists()


def test_param_darcy(tmp_path, capsys):
    cfg = tmp_path / "pd.json"
    cfg.write_text(json.dumps({"cv_sigma_x": [0.3], "cv_sigma_theta": [1.0], "n_test": 20, "grid_n": 128, "probes": 200}))
    assert cli.main(["param-darcy", "--config", str(cfg), "--p-list", "1", "--M-list", "30", "--seeds", "0"]) == 0
    out = capsys.readouterr().out
    assert "p=1,adapted M=30" in out and "p=1,vanilla M=30" in out


def test_hjb(tmp_path, capsys):
    assert cli.main(["hjb", "--d", "2", "--J", "30", "--n-steps", "3", "--sigma", "2", "--reference", "2000", "--output-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "V(x0,0)" in out and "relative_error" in out
    assert len((tmp_path / "hjb_steps.csv").read_text().splitlines()) == 4


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        cli.main(["nope"])


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "kernelpde.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "param-darcy" in r.stdout


def test_shipped_configs_parse():
    root = Path(__file__).resolve().parents[1] / "configs"
    loaders = {
        "convergence": harness.ExperimentConfig.from_json,
        "param_darcy": harness.ParamDarcyConfig.from_json,
        "filldist": harness.FillDistanceConfig.from_json,
        "hjb": lambda p: hjb.HjbConfig(**json.loads(p.read_text())),
    }
    files = sorted(root.glob("*.json"))
    assert files
    for path in files:
        loader = next(v for k, v in loaders.items() if path.name.startswith(k))
        loader(path)
