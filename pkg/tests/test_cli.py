import json

import pytest

from srlab.cli import main


def test_verify_all_selected_criteria(tmp_path, capsys):
    assert main(["verify-all", "--only", "3", "9", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "criterion  3: PASS" in out
    assert json.loads((tmp_path / "verify_smoke.json").read_text())


def test_unknown_suite_is_a_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["verify-all", "--suite", "bogus"])
    assert info.value.code == 2


def test_missing_config_is_a_usage_error(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "none.toml")]) == 2


def test_solve_then_variation_and_regularity(tmp_path):
    out = tmp_path / "s"
    assert main(["solve", "--to", "0.3", "0.4", "0.2", "--grid", "64", "--out", str(out)]) == 0
    traj = str(out / "trajectory.json")
    assert main(["variation", traj, "--phi", "hat", "random-1", "--out", str(tmp_path / "v")]) == 0
    assert (tmp_path / "v" / "variation.csv").read_text().startswith("phi,lambda,deviation,bound")
    assert main(["regularity", str(out / "trajectory.txt"), "--out", str(tmp_path / "r")]) == 0


@pytest.mark.parametrize("name", ["step", "sine", "cos", "const"])
def test_named_controls(tmp_path, name):
    assert main(["fourier", name, "--grid", "1024", "--out", str(tmp_path)]) == 0
    assert main(["kfunc", name, "--M", "1", "--out", str(tmp_path)]) == 0


def test_step_fourier_verdicts(tmp_path, capsys):
    assert main(["fourier", "step", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "alpha=0.4: converging" in out and "alpha=0.6: diverging" in out


def test_bad_control_file(tmp_path):
    assert main(["regularity", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2


def test_config_flags_override(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('structure = "heisenberg"\nendpoints = []\n')
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "bundle.json").exists()
