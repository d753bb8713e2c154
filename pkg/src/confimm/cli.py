"""Command line entry point: ``confimm immerse|modulus|path|invariants|corrugate``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import io
from .config import PipelineConfig, config_keys, load_config
from .errors import ConfimmError, ParseError
from .geometry import GridTorusMap, MetricField, pullback_metric, sup_defect


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file")
    for key in config_keys():
        common.add_argument(f"--{key}", dest=key, default=None, metavar=key.upper())

    p = argparse.ArgumentParser(prog="confimm")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("immerse", parents=[common], help="full pipeline to a conformal immersion")
    m = sub.add_parser("modulus", parents=[common], help="conformal modulus of a mesh or metric file")
    m.add_argument("input")
    pa = sub.add_parser("path", parents=[common], help="continuation between two conformal immersions")
    pa.add_argument("start")
    pa.add_argument("end")
    inv = sub.add_parser("invariants", parents=[common], help="regular homotopy class of a mesh")
    inv.add_argument("input")
    c = sub.add_parser("corrugate", parents=[common], help="one corrugation step on a mesh")
    c.add_argument("input")
    return p


def _config(args) -> PipelineConfig:
    overrides = {k: getattr(args, k) for k in config_keys() if getattr(args, k) is not None}
    return load_config(args.config, overrides)


def _load_map(path: str) -> GridTorusMap:
    if path.endswith(".obj"):
        return io.read_obj(path)
    tag, data = io.read_field(path)
    if tag != "map":
        raise ParseError(f"expected a mesh or map field, got {tag!r}", 3)
    return GridTorusMap(data)


def _load_metric(path: str) -> MetricField:
    if path.endswith(".obj"):
        return pullback_metric(io.read_obj(path))
    tag, data = io.read_field(path)
    if tag == "metric":
        return MetricField.from_entries(data[..., 0], data[..., 1], data[..., 2])
    if tag == "map":
        return pullback_metric(GridTorusMap(data))
    raise ParseError(f"cannot take the modulus of a {tag!r} field", 3)


def decimal(x: float) -> str:
    return f"{round(float(x), 12) + 0.0:.12f}"


def cmd_immerse(args, out) -> int:
    from .pipeline import run_immerse

    cfg = _config(args)
    res = run_immerse(cfg, cfg.out)
    out.write(f"modulus {decimal(res.conformality.modulus.re)} {decimal(res.conformality.modulus.im)}\n")
    out.write(f"Q {res.conformality.distortion:.6f}\n")
    out.write(f"degree {res.certificate.degree}\n")
    out.write(f"report {Path(cfg.out) / 'report.txt'}\n")
    return 0


def cmd_modulus(args, out) -> int:
    from .teich import modulus_of_metric

    cfg = _config(args)
    tau = modulus_of_metric(_load_metric(args.input), cfg.tol_cg)
    out.write(f"{decimal(tau.re)} {decimal(tau.im)}\n")
    return 0


def cmd_path(args, out) -> int:
    from .pipeline import run_path

    cfg = _config(args)
    path = run_path(cfg, _load_map(args.start), _load_map(args.end), cfg.out)
    for node in path:
        out.write(f"{node.t:.6f} {decimal(node.w.real)} {decimal(node.w.imag)} {node.residual:.3e}\n")
    return 0


def cmd_invariants(args, out) -> int:
    from .invariants import _upsampled, component_count, regular_homotopy_class

    cfg = _config(args)
    f = _load_map(args.input)
    cls = regular_homotopy_class(f, cfg.kappa)
    out.write(f"q(1,0) = {cls.q10}\nq(0,1) = {cls.q01}\nq(1,1) = {cls.q11}\n")
    if cfg.refine > 1:
        fine = regular_homotopy_class(_upsampled(f, cfg.refine), cfg.kappa)
        out.write(f"refine {cfg.refine}: {fine.q10} {fine.q01} {fine.q11} "
                  f"({'stable' if fine == cls else 'CHANGED'})\n")
    out.write(f"components(chi={cfg.chi}) = {component_count(cfg.chi)}\n")
    return 0


def cmd_corrugate(args, out) -> int:
    from .convex_integration import StageRecord, corrugate_along

    cfg = _config(args)
    f = _load_map(args.input)
    rho = np.full((f.n, f.n), cfg.rho)
    g = corrugate_along(f, cfg.direction, rho, cfg.frequency, 1, cfg.sv_min)
    ell = {1: np.array([1.0, 0.0]), 2: np.array([0.0, 1.0]), 3: np.array([1.0, 1.0]) / np.sqrt(2.0)}[cfg.direction]
    target = pullback_metric(f).data + cfg.rho * np.outer(ell, ell)
    err = sup_defect(pullback_metric(g), MetricField(target))
    moved = float(np.max(np.linalg.norm(g.values - f.values, axis=-1)))
    d = Path(cfg.out)
    d.mkdir(parents=True, exist_ok=True)
    io.write_obj(d / "corrugated.obj", g)
    io.write_stage_log(d / "stage_log.csv", [StageRecord(1, cfg.direction, cfg.frequency, err, moved)])
    out.write(f"sup_defect {err:.6e}\ndisplacement {moved:.6e}\n")
    return 0


COMMANDS = {
    "immerse": cmd_immerse,
    "modulus": cmd_modulus,
    "path": cmd_path,
    "invariants": cmd_invariants,
    "corrugate": cmd_corrugate,
}


def main(argv: Optional[List[str]] = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args, out)
    except ConfimmError as exc:
        err.write(f"error [{args.command}] {type(exc).__name__}: {exc}\n")
        return exc.exit_code
    except (OSError, ValueError) as exc:
        err.write(f"error [{args.command}] {type(exc).__name__}: {exc}\n")
        return 2 if isinstance(exc, OSError) else 4


if __name__ == "__main__":
    sys.exit(main())
