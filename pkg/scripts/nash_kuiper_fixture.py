"""The scaled-torus / flat-target fixture: shortness check, then runs after
rescaling to a short map.

    python scripts/nash_kuiper_fixture.py --scale 0.3 --stages 8
"""

import argparse

import numpy as np

from confimm.convex_integration import StageSchedule, make_short, nash_kuiper_run
from confimm.errors import ConfimmError
from confimm.geometry import GridTorusMap, identity_metric, pullback_metric, relative_eigenvalues
from confimm.surfaces import torus_of_revolution


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--grid", type=int, default=256)
    p.add_argument("--scale", type=float, default=0.3)
    p.add_argument("--stages", type=int, default=8)
    p.add_argument("--theta", type=float, default=0.4)
    args = p.parse_args()

    n = args.grid
    g = identity_metric(n)
    f0 = GridTorusMap(args.scale * torus_of_revolution(n).values)
    _, hi = relative_eigenvalues(pullback_metric(f0), g)
    print(f"largest eigenvalue of f0*h against g: {np.max(hi):.3f} (short needs < 1)")

    for name, f in (("as given", f0), ("rescaled", make_short(f0, [g]))):
        schedule = StageSchedule.geometric(theta=args.theta, stages=args.stages, epsilon=0.05, n=n,
                                           require_epsilon=False)
        try:
            res = nash_kuiper_run(f, g, schedule, 1e-8)
        except ConfimmError as exc:
            print(f"{name}: {type(exc).__name__}: {exc}")
            continue
        print(f"{name}: stage defects {' '.join(f'{d:.3f}' for d in res.stage_defects())}")


if __name__ == "__main__":
    main()
