"""Tabulate endpoint-deviation orders with and without the moment projection.

Usage: python3 scripts/variation_orders.py [--grid 128] [--seeds 0 1 2]
"""

import argparse

from srlab import acceptance, srgeom, variation
from srlab.errors import InsufficientDataError

CASES = [
    ("heisenberg", acceptance.HEIS_NORMAL),
    ("martinet", acceptance.MART_ABNORMAL),
    ("martinet", acceptance.MART_GENERIC),
    ("engel", acceptance.ENGEL_NORMAL),
]


def slope(s, traj, phi, comp):
    try:
        return f"{variation.endpoint_order(s, traj, phi, component=comp).slope:.4f}"
    except InsufficientDataError:
        return "flat"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--grid", type=int, default=128)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    args = ap.parse_args()
    print("structure   endpoint               comp  seed  rank-flag              raw     projected")
    for name, x1 in CASES:
        s = srgeom.catalogue(name)
        traj = acceptance.solved(name, x1, args.grid)
        for comp in range(s.rank_k):
            for seed in args.seeds:
                phi = variation.random_smooth(args.grid, seed)
                proj = variation.project_to_H(phi, traj, structure=s, component=comp)
                flag = proj.flag or f"rank {proj.rank}"
                print(f"{name:11s} {str([float(v) for v in x1]):22s} {comp:4d} {seed:5d}  {flag:22s} "
                      f"{slope(s, traj, phi, comp):7s} {slope(s, traj, proj.phi, comp)}")


if __name__ == "__main__":
    main()
