"""Command-line entry point ``srlab``.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import acceptance, geodesics, interpdual, regularity, spectral, srgeom, variation
from .errors import SRLabError
from .experiments import ExperimentConfig, _csv, _plain_tree, run_experiment
from .regularity import SampledControl

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

NAMED_CONTROLS = {
    "step": lambda t: np.where(t < 0.5, -1.0, 1.0),
    "sine": lambda t: np.sin(2 * np.pi * t),
    "cos": lambda t: np.cos(2 * np.pi * t),
    "const": lambda t: np.ones_like(t),
}


class UsageError(SRLabError):
    pass


def load_control(spec: str, N: int, where: str = "mid") -> SampledControl:
    """A named control (``step``, ``sine``, ``cos``, ``const``) or a trajectory file (JSON or text)."""
    if spec in NAMED_CONTROLS:
        return SampledControl.from_function(NAMED_CONTROLS[spec], N, where=where)
    return SampledControl(load_trajectory(spec).controls)


def load_trajectory(path: str) -> geodesics.Trajectory:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"no such control or trajectory file: {path}")
    text = p.read_text()
    return geodesics.from_json(text) if text.lstrip().startswith("{") else geodesics.load_text(p)


def _write(out: Path, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def _dump(obj) -> str:
    return json.dumps(_plain_tree(obj), sort_keys=True, indent=1)


def _print_checks(checks) -> bool:
    for c in checks:
        print(c.line())
    return all(c.passed for c in checks)


# subcommands ------------------------------------------------------------------------------------

def cmd_solve(args, cfg: ExperimentConfig | None) -> int:
    if cfg is not None:
        bundle = run_experiment(cfg)
        ok = _print_checks(bundle.checks)
        print(f"wrote {len(bundle.artifacts)} files to {cfg.out}")
        return EXIT_PASS if ok else EXIT_FAIL
    if args.to is None:
        raise UsageError("solve needs --config or --to")
    s = srgeom.resolve_structure(args.structure)
    x0 = np.zeros(s.dim_n) if args.start is None else np.asarray(args.start, float)
    traj = geodesics.solve_shortest(s, x0, np.asarray(args.to, float), args.grid or 128,
                                    geodesics.SolverOptions(seed=args.seed))
    out = Path(args.out)
    _write(out, "trajectory.json", geodesics.to_json(traj))
    _write(out, "trajectory.txt", geodesics.format_text(traj))
    print(f"length {traj.length_l!r} defect {traj.info['endpoint_defect']:.3g} "
          f"stationarity {traj.info['stationarity']:.3g} ({traj.info['label']})")
    return EXIT_PASS if traj.info["certified"] else EXIT_FAIL


def cmd_regularity(args, cfg) -> int:
    u = load_control(args.control, args.grid or 1024)
    if args.delta is not None:
        u = SampledControl(u.values, u.t1, u.t2, args.delta)
    rep = regularity.regularity_report(u, args.p, args.alpha, args.gamma,
                                       args.eps if args.gamma is not None else None)
    if args.h_grid:
        extra = {p: regularity.fit_exponent(u, p, args.h_grid).alpha for p in args.p}
        rep.fitted_alpha["custom_h_grid"] = extra
    out = Path(args.out)
    _write(out, "regularity.json", rep.to_json())
    _write(out, "moduli.csv", rep.moduli_csv())
    for p, fit in rep.fitted_alpha.items():
        print(f"p={p}: {fit}")
    return EXIT_PASS


def cmd_kfunc(args, cfg) -> int:
    u = load_control(args.control, args.grid or 64)
    comp = args.component
    recs, rows = [], []
    for M in args.M:
        pair = interpdual.duality_gap(u.values[comp], M, args.q, args.r)
        rec = pair.to_record()
        recs.append(rec)
        rows.append((M, pair.S_value, pair.K_value, pair.gap, pair.relative_gap))
        print(f"M={M:g}: S={pair.S_value:.6g} K={pair.K_value:.6g} relative gap {pair.relative_gap:.3g}")
    out = Path(args.out)
    _write(out, "kfunc.json", _dump(recs))
    _write(out, "kfunc.csv", _csv(["M", "S", "K", "gap", "relative_gap"], rows))
    return EXIT_PASS if all(r[4] <= 1e-2 for r in rows) else EXIT_FAIL


def cmd_variation(args, cfg) -> int:
    traj = load_trajectory(args.trajectory)
    s = traj.structure if args.structure is None else srgeom.resolve_structure(args.structure)
    if s is None:
        raise UsageError("trajectory file names no known structure; pass --structure")
    comp = variation.default_component(s) if args.component is None else args.component
    lams = args.lambdas or variation.log_lambda_grid().tolist()
    rows, fits, viol = [], {}, 0
    for spec in args.phi:
        phi = variation.from_spec(spec, traj.N)
        tab = variation.first_order_check(s, traj, phi, lams, comp)
        viol += tab.violations
        for lam, dv, bd in zip(tab.lambdas, tab.deviation, tab.bound):
            i = int(np.argmax(dv))
            rows.append((spec, lam, float(dv[i]), float(bd[i]), float(np.max(dv - bd))))
        target = variation.project_to_H(phi, traj, structure=s, component=comp).phi if args.project else phi
        try:
            fit = variation.endpoint_order(s, traj, target, lams, comp)
            fits[spec] = {"slope": fit.slope, "intercept": fit.intercept, "empirical_c": fit.empirical_c,
                          "residual": fit.residual, "notes": fit.notes}
        except SRLabError as exc:
            fits[spec] = {"slope": None, "notes": [str(exc)]}
        f = fits[spec]
        print(f"{spec}: slope {f['slope']:.4g}" if f["slope"] is not None else f"{spec}: no slope ({f['notes'][0]})")
    out = Path(args.out)
    _write(out, "variation.csv", _csv(["phi", "lambda", "deviation", "bound", "max_excess"], rows))
    _write(out, "variation_fit.json", _dump({"component": comp, "projected": args.project, "fits": fits,
                                             "first_order_violations": viol}))
    return EXIT_PASS if viol == 0 else EXIT_FAIL


def cmd_fourier(args, cfg) -> int:
    u = load_control(args.control, args.grid or 16384, where="left")
    M_max = args.M_max if args.M_max is not None else u.N // 8  # stay well below Nyquist
    table = spectral.fourier_coeffs(u, M_max)
    verdicts = spectral.finiteness_verdicts(table, args.alpha)
    summary = {"M_max": M_max, "parseval_defect": spectral.parseval_defect(table),
               "decay_slope": spectral.decay_slope(table), "verdicts": {str(a): v for a, v in verdicts.items()},
               "weighted": {str(a): {"value": d.value, "ratios": d.ratios, "tail": d.tail_estimate}
                            for a, d in table.weighted.items()},
               "ell_gamma": {str(g): spectral.ell_gamma_norm(table, g).value for g in args.gamma}}
    n_list = [n for n in (8, 16, 32, 64, 128, 256, 512) if n <= M_max]
    if len(n_list) >= 2:
        summary["partial_sum_slope"] = spectral.partial_sum_error(u, n_list).slope
    out = Path(args.out)
    _write(out, "fourier.csv", _csv(["m", "abs_c"], zip(table.modes.tolist(), table.magnitudes())))
    _write(out, "fourier.json", _dump(summary))
    for a, v in verdicts.items():
        print(f"alpha={a:g}: {'converging' if v['converging'] else 'diverging'}")
    return EXIT_PASS


def cmd_ballbox(args, cfg) -> int:
    s = srgeom.resolve_structure(args.structure)
    x = np.zeros(s.dim_n) if args.at is None else np.asarray(args.at, float)
    rep = geodesics.ballbox_probe(s, x, args.direction, args.radii, args.grid or 64, args.restarts, args.seed)
    _write(Path(args.out), "ballbox.json", _dump({"radii": rep.radii, "distances": rep.distances,
                                                  "exponent": rep.exponent, "residual": rep.residual,
                                                  "c_bb": rep.c_bb, "within_bounds": rep.within_bounds,
                                                  "failures": rep.failures}))
    print(f"exponent {rep.exponent:.4f} c_bb {rep.c_bb:.4g} within bounds {rep.within_bounds}")
    return EXIT_PASS if rep.within_bounds else EXIT_FAIL


def cmd_verify_all(args, cfg) -> int:
    results = acceptance.run_suite(args.suite, args.only)
    ok = True
    records = []
    for i, checks in results.items():
        passed = all(c.passed for c in checks)
        ok &= passed
        print(f"criterion {i:2d}: {'PASS' if passed else 'FAIL'}")
        for c in checks:
            print("   " + c.line())
            records.append(c.record())
    _write(Path(args.out), f"verify_{args.suite}.json", json.dumps(records, sort_keys=True, indent=1))
    return EXIT_PASS if ok else EXIT_FAIL


# parser ------------------------------------------------------------------------------------------

def _global_flags(p: argparse.ArgumentParser, default) -> None:
    p.add_argument("--config", default=default(None), help="experiment config (TOML)")
    p.add_argument("--seed", type=int, default=default(0))
    p.add_argument("--out", default=default("out"), help="output directory")
    p.add_argument("--grid", type=int, default=default(None), help="number of cells N")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srlab", description=__doc__.splitlines()[0])
    _global_flags(parser, lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, lambda v: argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="solve shortest paths (or run a config pipeline)")
    p.add_argument("--structure", default="heisenberg")
    p.add_argument("--start", type=float, nargs="+")
    p.add_argument("--to", type=float, nargs="+")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("regularity", parents=[common], help="moduli, Hölder constants and exponent fits")
    p.add_argument("control", help="trajectory file or one of: " + ", ".join(NAMED_CONTROLS))
    p.add_argument("--p", type=float, nargs="+", default=[2.0])
    p.add_argument("--alpha", type=float, nargs="+", default=[0.5])
    p.add_argument("--delta", type=float)
    p.add_argument("--h-grid", type=float, nargs="+")
    p.add_argument("--gamma", type=float)
    p.add_argument("--eps", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.025])
    p.set_defaults(func=cmd_regularity)

    p = sub.add_parser("kfunc", parents=[common], help="primal S and dual K values with their gap")
    p.add_argument("control")
    p.add_argument("--M", type=float, nargs="+", default=[0.5, 1.0, 2.0, 4.0])
    p.add_argument("--q", type=float, default=2.0)
    p.add_argument("--r", type=float, default=2.0)
    p.add_argument("--component", type=int, default=0)
    p.set_defaults(func=cmd_kfunc)

    p = sub.add_parser("variation", parents=[common], help="endpoint deviation under control variations")
    p.add_argument("trajectory")
    p.add_argument("--structure")
    p.add_argument("--phi", nargs="+", default=["hat"], help="hat, sine-<m>, random-<seed>")
    p.add_argument("--lambdas", type=float, nargs="+")
    p.add_argument("--component", type=int)
    p.add_argument("--project", action="store_true", help="project phi onto the moment kernel first")
    p.set_defaults(func=cmd_variation)

    p = sub.add_parser("fourier", parents=[common], help="Fourier coefficients and decay verdicts")
    p.add_argument("control")
    p.add_argument("--alpha", type=float, nargs="+", default=[0.4, 0.6])
    p.add_argument("--gamma", type=float, nargs="+", default=[2.0])
    p.add_argument("--M-max", type=int)
    p.set_defaults(func=cmd_fourier)

    p = sub.add_parser("ballbox", parents=[common], help="fit the distance exponent along a direction")
    p.add_argument("--structure", default="heisenberg")
    p.add_argument("--at", type=float, nargs="+")
    p.add_argument("--direction", type=float, nargs="+", default=[0.0, 0.0, 1.0])
    p.add_argument("--radii", type=float, nargs="+", default=[0.02, 0.04, 0.08, 0.16, 0.32])
    p.add_argument("--restarts", type=int, default=5)
    p.set_defaults(func=cmd_ballbox)

    p = sub.add_parser("verify-all", parents=[common], help="run the acceptance suite")
    p.add_argument("--suite", choices=["smoke", "full"], default="smoke")
    p.add_argument("--only", type=int, nargs="+", help="criterion numbers")
    p.set_defaults(func=cmd_verify_all)
    return parser


def _apply_config(args, argv) -> ExperimentConfig | None:
    """Load ``--config``; flags given on the command line override its values."""
    if args.config is None:
        return None
    cfg = ExperimentConfig.load(args.config)
    explicit = {a.split("=", 1)[0] for a in argv}
    if "--seed" in explicit:
        cfg.seed = args.seed
    if "--out" in explicit:
        cfg.out = args.out
    if args.grid is not None:
        cfg.grid = args.grid
    cfg.validate()
    args.seed, args.out = cfg.seed, cfg.out
    if args.grid is None:
        args.grid = cfg.grid
    return cfg


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_config(args, argv)
        return args.func(args, cfg)
    except (SRLabError, ValueError, OSError) as exc:  # bad input, config or file
        print(f"srlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
