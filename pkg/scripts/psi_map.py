"""Tabulate psi(w) - w over a polar grid in the ball, as CSV on stdout.

    python scripts/psi_map.py --grid 256 --rings 3 --spokes 12 > psi.csv
"""

import argparse
import cmath
import sys

from confimm.config import load_config
from confimm.pipeline import PsiModel, base_torus


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--grid", default="256")
    p.add_argument("--radius", default="0.2")
    p.add_argument("--rings", type=int, default=3)
    p.add_argument("--spokes", type=int, default=12)
    args = p.parse_args()

    cfg = load_config(None, {"grid": args.grid, "radius": args.radius})
    model = PsiModel.build(cfg, base_torus(cfg))
    out = sys.stdout
    out.write("w_re,w_im,psi_re,psi_im,distance,sup_defect\n")
    points = [cfg.tau0] + [
        cfg.tau0 + cfg.radius * k / args.rings * cmath.exp(2j * cmath.pi * j / args.spokes)
        for k in range(1, args.rings + 1) for j in range(args.spokes)
    ]
    for w in points:
        run = model.run(w)
        z = model.psi(w).z
        out.write(f"{w.real:.6f},{w.imag:.6f},{z.real:.6f},{z.imag:.6f},{abs(z - w):.6f},{run.sup_defect:.4f}\n")
        out.flush()


if __name__ == "__main__":
    main()
