"""Error and displacement of one corrugation step as the frequency doubles.

    python scripts/corrugation_order.py --grid 1024 --rho 1.0
"""

import argparse

import numpy as np

from confimm.convex_integration import corrugate_along
from confimm.geometry import MetricField, pullback_metric, sup_defect
from confimm.surfaces import torus_of_revolution

DIRECTIONS = {1: np.array([1.0, 0.0]), 2: np.array([0.0, 1.0]), 3: np.array([1.0, 1.0]) / np.sqrt(2.0)}


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--grid", type=int, default=1024)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--freqs", type=int, nargs="+", default=[16, 32, 64, 128])
    args = p.parse_args()

    n = args.grid
    f = torus_of_revolution(n)
    P = pullback_metric(f)
    print("direction N sup_defect displacement")
    for d, ell in DIRECTIONS.items():
        target = MetricField(P.data + args.rho * np.outer(ell, ell))
        for N in args.freqs:
            out = corrugate_along(f, d, np.full((n, n), args.rho), N)
            err = sup_defect(pullback_metric(out), target)
            moved = np.max(np.linalg.norm(out.values - f.values, axis=-1))
            print(f"{d} {N} {err:.4e} {moved:.4e}")


if __name__ == "__main__":
    main()
