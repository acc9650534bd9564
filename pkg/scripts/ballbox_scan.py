"""Distance exponents along coordinate directions for each catalogue structure.

Usage: python3 scripts/ballbox_scan.py [--restarts 3] [--grid 64]
"""

import argparse

import numpy as np

from srlab import geodesics, srgeom


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--restarts", type=int, default=3)
    ap.add_argument("--grid", type=int, default=64)
    args = ap.parse_args()
    radii = [0.02, 0.04, 0.08, 0.16]
    for name in ("heisenberg", "martinet", "engel"):
        s = srgeom.catalogue(name)
        for axis in range(s.dim_n):
            e = np.eye(s.dim_n)[axis]
            rep = geodesics.ballbox_probe(s, np.zeros(s.dim_n), e, radii, args.grid, args.restarts)
            print(f"{name:11s} axis {axis}: exponent {rep.exponent:.3f}  c_bb {rep.c_bb:.3g}  "
                  f"failures {rep.failures}")


if __name__ == "__main__":
    main()
