"""End-to-end runs: sweep, fixed-point solve, final immersion and its diagnostics."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import io
from .config import PipelineConfig
from .convex_integration import (
    RunResult,
    StageSchedule,
    make_short,
    nash_kuiper_run,
    parametric_sweep,
)
from .errors import ConfigError, NotConformal
from .fixed_point import PsiOracle, WindingCertificate, brouwer_solve, browder_continuation, winding_number
from .geometry import GridTorusMap, MetricField, pullback_metric, require_immersion
from .invariants import conformal_distortion, regular_homotopy_class
from .surfaces import conformal_torus_of_revolution
from .teich import Modulus, TeichBall, metric_from_modulus, modulus_of_metric, uniformize


def base_torus(cfg: PipelineConfig) -> GridTorusMap:
    """Torus of revolution whose modulus is ``i * tau_im``, conformally parametrized."""
    r = cfg.tube
    R = r * math.sqrt(1.0 + 1.0 / cfg.tau_im ** 2)
    return conformal_torus_of_revolution(cfg.grid, R, r)


def schedule_for(cfg: PipelineConfig) -> StageSchedule:
    kw = dict(epsilon=cfg.eps, c0_budget=cfg.c0_budget, require_epsilon=cfg.strict_eps)
    plan = cfg.frequency_plan()
    if cfg.stages == 1:
        return StageSchedule.single(plan, theta=cfg.theta, **kw)
    return StageSchedule.geometric(cfg.theta, cfg.stages, plan, n=cfg.grid, **kw)


class MetricFamily:
    """Targets ``w -> lambda * Phi^* g_w`` in the conformal class of ``g_w``.

    ``Phi`` uniformizes the base map and ``lambda`` is its conformal factor, so
    at the base modulus the target is the base metric itself.
    """

    def __init__(self, base: GridTorusMap, tol_cg: float):
        P = pullback_metric(base)
        self.n = base.n
        self.chart = uniformize(P, tol_cg)
        flat = self.chart.pullback(metric_from_modulus(self.chart.tau, self.n))
        self.factor = P.trace / flat.trace

    def __call__(self, w) -> MetricField:
        g = self.chart.pullback(metric_from_modulus(w, self.n))
        return MetricField(g.data * self.factor[..., None, None])


@dataclass
class PsiModel:
    """Everything needed to evaluate psi for one base map."""

    cfg: PipelineConfig
    base: GridTorusMap
    ball: TeichBall
    family: MetricFamily
    short: GridTorusMap
    schedule: StageSchedule
    runs: Dict[Tuple[float, float], RunResult] = field(default_factory=dict)

    @classmethod
    def build(cls, cfg: PipelineConfig, base: GridTorusMap) -> "PsiModel":
        require_immersion(base, cfg.sv_min)
        ball = TeichBall.sampled(cfg.tau0, cfg.radius, cfg.samples)
        family = MetricFamily(base, cfg.tol_cg)
        short = make_short(base, [family(w) for w in ball.samples], cfg.margin)
        return cls(cfg, base, ball, family, short, schedule_for(cfg))

    def run(self, w) -> RunResult:
        z = w.z if isinstance(w, Modulus) else complex(w)
        key = (z.real, z.imag)
        if key not in self.runs:
            self.runs[key] = nash_kuiper_run(self.short, self.family(Modulus.from_complex(z)),
                                             self.schedule, self.cfg.sv_min)
        return self.runs[key]

    def psi(self, w) -> Modulus:
        return modulus_of_metric(pullback_metric(self.run(w).map), self.cfg.tol_cg)


@dataclass
class Conformality:
    modulus: Modulus
    distortion: float


def measure_conformality(f: GridTorusMap, tau0: complex, tol_cg: float) -> Conformality:
    """Modulus of ``f*h`` and the distortion of ``f`` against ``Phi^* g_tau0``,
    ``Phi`` the uniformizing chart of ``f*h``."""
    P = pullback_metric(f)
    chart = uniformize(P, tol_cg)
    g0 = chart.pullback(metric_from_modulus(tau0, f.n))
    return Conformality(chart.tau, conformal_distortion(f, g0))


@dataclass
class ImmerseResult:
    report: List[Tuple[str, object]]
    timings: List[Tuple[str, float]]
    final: GridTorusMap
    final_run: RunResult
    solution: complex
    residual: float
    evaluations: int
    certificate: WindingCertificate
    conformality: Conformality
    sweep: list
    ledger: list


def _cplx(z: complex) -> str:
    return f"{io.fmt(z.real)} {io.fmt(z.imag)}"


def run_immerse(cfg: PipelineConfig, out: Optional[str] = None) -> ImmerseResult:
    timings = []
    clock = time.perf_counter()

    def lap(name):
        nonlocal clock
        now = time.perf_counter()
        timings.append((name, now - clock))
        clock = now

    model = PsiModel.build(cfg, base_torus(cfg))
    lap("setup")
    sweep = parametric_sweep(model.short, model.ball, model.schedule, metric_of=model.family, tol_cg=cfg.tol_cg)
    for entry in sweep:
        model.runs[(entry.w.z.real, entry.w.z.imag)] = entry.result
    lap("sweep")

    oracle = PsiOracle(model.psi)
    for entry in sweep:
        oracle._cache[(entry.w.z.real, entry.w.z.imag)] = entry.psi.z
    cert = winding_number(oracle, cfg.tau0, cfg.radius, cfg.winding_samples)
    lap("winding")
    sol = brouwer_solve(oracle, cfg.tau0, cfg.radius, cfg.tol, max_evals=cfg.max_evals)
    # psi values the solver consumed, including ones already cached by the sweep
    solve_evals = len(sol.history)
    lap("solve")

    final_run = model.run(sol.w)
    final = final_run.map
    conf = measure_conformality(final, cfg.tau0, cfg.tol_cg)
    cls = regular_homotopy_class(final, cfg.kappa)
    lap("diagnostics")

    report: List[Tuple[str, object]] = [("config." + k, v) for k, v in cfg.items()]
    report += [
        ("base.modulus", _cplx(model.family.chart.tau.z)),
        ("short.scale", float(np.max(np.abs(model.short.values)) / np.max(np.abs(model.base.values)))),
        ("schedule.deltas", " ".join(io.fmt(d) for d in model.schedule.deltas)),
        ("schedule.plan", " ".join(f"{d}:{N}" for d, N in sorted(model.schedule.frequencies(1).items()))),
    ]
    for k, entry in enumerate(sweep):
        report += [
            (f"sweep.{k}.w", _cplx(entry.w.z)),
            (f"sweep.{k}.psi", _cplx(entry.psi.z)),
            (f"sweep.{k}.distance", abs(entry.psi.z - entry.w.z)),
            (f"sweep.{k}.sup_defect", entry.result.sup_defect),
            (f"sweep.{k}.eps_isometric", entry.result.sup_defect < cfg.eps),
        ]
    report += [
        ("sweep.max_distance", max(abs(e.psi.z - e.w.z) for e in sweep)),
        ("winding.samples", cert.samples),
        ("winding.degree", cert.degree),
        ("winding.min_gap", cert.min_gap),
        ("solve.w", _cplx(sol.w)),
        ("solve.residual", sol.residual),
        ("solve.evaluations", solve_evals),
        ("psi.evaluations", oracle.evaluations),
    ]
    for k, (w, p) in enumerate(oracle.ledger):
        report.append((f"psi.ledger.{k}", f"{_cplx(w)} -> {_cplx(p)}"))
    report += [
        ("final.stage_defects", " ".join(io.fmt(d) for d in final_run.stage_defects())),
        ("final.sup_defect", final_run.sup_defect),
        ("final.displacement", final_run.displacement),
        ("final.modulus", _cplx(conf.modulus.z)),
        ("final.modulus_error", abs(conf.modulus.z - cfg.tau0)),
        ("final.Q", conf.distortion),
        ("final.class", f"{cls.q10} {cls.q01} {cls.q11}"),
    ]
    result = ImmerseResult(report, timings, final, final_run, sol.w, sol.residual, solve_evals,
                           cert, conf, sweep, list(oracle.ledger))
    if out:
        write_immerse(result, out)
    return result


def write_immerse(result: ImmerseResult, out: str) -> None:
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    io.write_obj(d / "immersion.obj", result.final)
    io.write_stage_log(d / "stage_log.csv", result.final_run.log)
    io.write_table(d / "sweep.csv", ("w_re", "w_im", "psi_re", "psi_im", "sup_defect"),
                   [(e.w.re, e.w.im, e.psi.re, e.psi.im, e.result.sup_defect) for e in result.sweep])
    io.write_report(d / "report.txt", result.report)
    io.write_report(d / "timings.txt", [(f"seconds.{k}", v) for k, v in result.timings])


# --- conformal paths ----------------------------------------------------------------


def rigid_motion(a: GridTorusMap, b: GridTorusMap) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Best rotation ``R`` and centroids with ``b ~ R (a - ca) + cb`` (Kabsch)."""
    A = a.values.reshape(-1, 3)
    B = b.values.reshape(-1, 3)
    ca, cb = A.mean(axis=0), B.mean(axis=0)
    U, _, Vt = np.linalg.svd((A - ca).T @ (B - cb))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
    R = Vt.T @ D @ U.T
    err = float(np.max(np.linalg.norm((A - ca) @ R.T + cb - B, axis=1)))
    return R, ca, cb, err


def _rotation_power(R: np.ndarray, t: float) -> np.ndarray:
    angle = math.acos(max(-1.0, min(1.0, 0.5 * (np.trace(R) - 1.0))))
    if angle < 1e-14:
        return np.eye(3)
    axis = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if np.linalg.norm(axis) < 1e-12:
        w, v = np.linalg.eigh(0.5 * (R + R.T))
        axis = v[:, np.argmax(w)]
    axis = axis / np.linalg.norm(axis)
    K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    a = t * angle
    return np.eye(3) + math.sin(a) * K + (1 - math.cos(a)) * K @ K


def interpolation(f0: GridTorusMap, f1: GridTorusMap, kind: str):
    if f0.n != f1.n:
        raise ConfigError(f"endpoint grids differ: {f0.n} vs {f1.n}")
    if kind == "linear":
        return lambda t: GridTorusMap((1 - t) * f0.values + t * f1.values)
    R, c0, c1, err = rigid_motion(f0, f1)
    scale = float(np.max(np.linalg.norm(f0.values - f0.values.reshape(-1, 3).mean(axis=0), axis=-1)))
    if err > 1e-6 * scale:
        raise ConfigError(f"endpoints are not related by a rigid motion (mismatch {err:.2e})")

    def at(t):
        Rt = _rotation_power(R, t)
        return GridTorusMap((f0.values - c0) @ Rt.T + c0 + t * (c1 - c0))

    return at


def check_endpoint(f: GridTorusMap, cfg: PipelineConfig, name: str) -> Conformality:
    conf = measure_conformality(f, cfg.tau0, cfg.tol_cg)
    if abs(conf.modulus.z - cfg.tau0) > cfg.tol_endpoint or conf.distortion > 1 + cfg.tol_conf:
        raise NotConformal(
            f"{name} endpoint: modulus {conf.modulus} vs target {Modulus.from_complex(cfg.tau0)}, "
            f"distortion {conf.distortion:.4f}"
        )
    return conf


def run_path(cfg: PipelineConfig, f0: GridTorusMap, f1: GridTorusMap, out: Optional[str] = None):
    """Continuation of the solution of ``psi_t(w) = tau0`` along the base family ``F_t``."""
    check_endpoint(f0, cfg, "start")
    check_endpoint(f1, cfg, "end")
    family = interpolation(f0, f1, cfg.homotopy)
    models: Dict[float, PsiModel] = {}

    def model(t):
        if t not in models:
            models[t] = PsiModel.build(cfg, family(t))
        return models[t]

    def psi(t, w):
        return model(t).psi(w)

    nodes = [k / (cfg.path_nodes - 1) for k in range(cfg.path_nodes)]
    partial = None
    try:
        path = browder_continuation(psi, cfg.tau0, cfg.radius, nodes, cfg.tol, max_evals=cfg.max_evals)
    except Exception as exc:
        partial = getattr(exc, "partial_path", None)
        if out and partial:
            _write_path(out, partial, model)
        raise
    if out:
        _write_path(out, path, model)
    return path


def _write_path(out: str, path, model) -> None:
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    io.write_table(d / "path.csv", ("t", "w_re", "w_im", "residual"),
                   [(node.t, node.w.real, node.w.imag, node.residual) for node in path])
    for k, node in enumerate(path):
        io.write_obj(d / f"path_{k:03d}.obj", model(node.t).run(node.w).map)
