"""Run one or more experiment configs and print their verdict lines.

Usage: python3 scripts/run_config.py configs/smoke.toml [configs/martinet.toml ...]
"""

import sys

from srlab.experiments import ExperimentConfig, run_experiment


def main(paths):
    ok = True
    for path in paths:
        cfg = ExperimentConfig.load(path)
        bundle = run_experiment(cfg)
        print(f"# {path} -> {cfg.out} (config {bundle.config_hash[:12]})")
        for c in bundle.checks:
            print(c.line())
        ok &= bundle.passed
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:] or ["configs/smoke.toml"]))
