import json

import pytest

from srlab.experiments import ConfigError, ExperimentConfig, run_experiment


def test_empty_endpoint_list_gives_empty_passing_bundle(tmp_path):
    b = run_experiment(ExperimentConfig(endpoints=[], out=str(tmp_path)))
    assert b.checks == [] and b.passed
    assert json.loads((tmp_path / "bundle.json").read_text())["checks"] == []


def test_smoke_run_is_complete_and_byte_identical(tmp_path):
    cfg = ExperimentConfig.load("configs/smoke.toml")
    cfg.out = str(tmp_path / "a")
    a = run_experiment(cfg)
    cfg.out = str(tmp_path / "b")
    run_experiment(cfg)
    stages = {c.name.split(".")[1] for c in a.checks}
    assert stages == {"solve", "regularity", "kfunc", "interpolation", "variation", "fourier"}
    assert a.passed, [c.line() for c in a.checks if not c.passed]
    assert all(c.anchor for c in a.checks)
    for name in sorted(p.name for p in (tmp_path / "a").iterdir()):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_config_hash_ignores_output_location():
    a = ExperimentConfig(out="x")
    b = ExperimentConfig(out="y")
    assert a.digest() == b.digest()
    assert a.digest() != ExperimentConfig(seed=1).digest()


@pytest.mark.parametrize("bad", [
    {"structure": "nowhere"},
    {"endpoints": [[1.0, 2.0]]},
    {"grid": 8},
    {"phi": ["triangle"]},
    {"case": "X"},
    {"colour": "red"},
])
def test_invalid_configs_are_rejected(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_malformed_file(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("grid = [\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(p)
