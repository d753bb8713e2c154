"""Acceptance runs. Each test records one PASS/FAIL line, shown in the terminal
summary under "acceptance criteria". Expected-red criteria are strict xfails."""

import cmath
import math
import time

import numpy as np
import pytest

from confimm.config import PipelineConfig, load_config
from confimm.convex_integration import StageSchedule, corrugate_along, nash_kuiper_run
from confimm.errors import ComponentJumpSuspected, ConfimmError
from confimm.fixed_point import PsiOracle, brouwer_solve, browder_continuation, winding_number
from confimm.geometry import GridTorusMap, MetricField, identity_metric, pullback_metric, sup_defect
from confimm.invariants import (
    LoopClass, _upsampled, component_count, extract_framed_loop, regular_homotopy_class, self_linking,
)
from confimm.pipeline import run_immerse, run_path, write_immerse
from confimm.surfaces import conformal_torus_of_revolution, torus_of_revolution
from confimm.teich import metric_from_modulus, modulus_of_metric

TAU, R = 1j, 0.2


def test_1_modulus_round_trip(criterion):
    worst, slowest = 0.0, 0.0
    for w in (1j, 2j, 0.5 + 0.8j, -0.3 + 1.5j):
        g = metric_from_modulus(w, 128)
        t = time.perf_counter()
        tau = modulus_of_metric(g)
        slowest = max(slowest, time.perf_counter() - t)
        worst = max(worst, abs(tau.z - w))
    ok = worst <= 1e-6 and slowest <= 5.0
    criterion(1, ok, f"max error {worst:.2e} (<= 1e-6), slowest solve {slowest:.2f}s (<= 5s)")
    assert ok


def test_2_torus_of_revolution(criterion):
    tau = modulus_of_metric(pullback_metric(torus_of_revolution(256, 2.0, 1.0)))
    exact = 1j / math.sqrt(3.0)
    err = abs(tau.z - exact)
    criterion(2, err <= 1e-4, f"modulus {tau}, error {err:.2e} (<= 1e-4)")
    assert err <= 1e-4


@pytest.fixture(scope="module")
def corrugation_order():
    n, rho = 2048, 1.0
    f = torus_of_revolution(n)
    target = MetricField(pullback_metric(f).data + rho * np.outer([1.0, 0.0], [1.0, 0.0]))
    rows = []
    for N in (50, 100, 200, 400):
        out = corrugate_along(f, 1, np.full((n, n), rho), N)
        P = pullback_metric(out)
        directional = float(np.max(np.abs(P.data[..., 0, 0] - target.data[..., 0, 0])))
        full = sup_defect(P, target)
        moved = float(np.max(np.linalg.norm(out.values - f.values, axis=-1)))
        rows.append((N, directional, full, moved))
    return rows


def _halves(values):
    ratios = [a / b for a, b in zip(values, values[1:])]
    return all(1.6 <= q <= 2.4 for q in ratios), ratios


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="u-line length is reproduced to roundoff at every N; see ledger")
def test_3_corrugation_order_directional(corrugation_order, criterion):
    ok, ratios = _halves([r[1] for r in corrugation_order])
    errs = ", ".join(f"{r[1]:.1e}" for r in corrugation_order)
    criterion("3a", ok, f"directional errors {errs}; ratios {', '.join(f'{q:.2f}' for q in ratios)}")
    assert ok


@pytest.mark.slow
def test_3_corrugation_order_full_and_displacement(corrugation_order, criterion):
    ok_full, rf = _halves([r[2] for r in corrugation_order])
    ok_disp, rd = _halves([r[3] for r in corrugation_order])
    ok = ok_full and ok_disp
    criterion("3b", ok, "full-defect ratios " + ", ".join(f"{q:.3f}" for q in rf)
              + "; displacement ratios " + ", ".join(f"{q:.3f}" for q in rd))
    assert ok


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="0.3 x torus is not short for the flat identity metric; see ledger")
def test_4_nash_kuiper_literal(criterion):
    n = 256
    f0 = GridTorusMap(0.3 * torus_of_revolution(n).values)
    schedule = StageSchedule.geometric(theta=0.4, stages=8, epsilon=0.05, n=n)
    t = time.perf_counter()
    try:
        res = nash_kuiper_run(f0, identity_metric(n), schedule, 1e-8)
    except ConfimmError as exc:
        criterion(4, False, f"{type(exc).__name__}: {exc}")
        raise
    defects = res.stage_defects()
    ok = (res.sup_defect < 0.05 and time.perf_counter() - t <= 300
          and all(b < a for a, b in zip(defects, defects[1:])))
    criterion(4, ok, f"sup defect {res.sup_defect:.3e}, stages {defects}")
    assert ok


@pytest.fixture(scope="module")
def default_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("immerse_a")
    return run_immerse(PipelineConfig().validate(), str(out)), out


@pytest.mark.slow
def test_5_end_to_end(default_run, criterion):
    res, _ = default_run
    ok = (res.residual <= 1e-3 and res.evaluations <= 30 and res.certificate.degree != 0
          and res.conformality.distortion <= 1.05)
    criterion(5, ok, f"w = {res.solution:.6f}, residual {res.residual:.2e}, evaluations {res.evaluations}, "
                     f"degree {res.certificate.degree}, Q {res.conformality.distortion:.4f}")
    assert ok


def _oracle(fn):
    return PsiOracle(lambda w: fn(w.z))


def test_6_fixed_point_fixtures(criterion):
    rot = 0.5 * cmath.exp(1j * math.radians(40))
    fixtures = {
        "identity": (lambda p: p, TAU),
        "shift": (lambda p: p + 0.05 + 0.1j, None),
        "rotation-contraction": (lambda p: TAU + 0.05 + rot * (p - TAU), None),
    }
    residuals = {}
    for name, (fn, _) in fixtures.items():
        sol = brouwer_solve(_oracle(fn), TAU, R, 1e-8)
        residuals[name] = sol.residual
    degrees = tuple(
        winding_number(_oracle(fn), TAU, R, 128).degree
        for fn in (lambda p: p, lambda p: 0.5 + 1j, lambda p: TAU + (p - TAU) ** 2 / R)
    )
    ok = max(residuals.values()) <= 1e-8 and degrees == (1, 0, 2)
    criterion(6, ok, f"residuals {', '.join(f'{k} {v:.1e}' for k, v in residuals.items())}; degrees {degrees}")
    assert ok


def stress_family(t, w):
    center = 0.5 * R * math.sin(1.0 / t) if t > 0 else 0.0
    return TAU + 0.5 * cmath.exp(0.7j) * (w.z - TAU - center)


@pytest.mark.slow
def test_7_continuation(criterion):
    cfg = load_config(None, {"path_nodes": "3"})
    f0 = conformal_torus_of_revolution(cfg.grid, math.sqrt(2.0), 1.0)
    c, s = math.cos(0.7), math.sin(0.7)
    rot = np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    f1 = GridTorusMap(f0.values @ rot.T + np.array([0.5, 0.0, 0.0]))
    path = run_path(cfg, f0, f1)
    worst = max(node.residual for node in path)
    step = max(abs(b.w - a.w) for a, b in zip(path, path[1:]))
    rigid_ok = worst <= cfg.tol and step <= cfg.radius / 4

    try:
        stress = browder_continuation(stress_family, TAU, R, [k / 10 for k in range(11)], tol=1e-6)
        outcome = "tracked"
    except ComponentJumpSuspected as exc:
        stress = exc.partial_path
        outcome = f"ComponentJumpSuspected after t = {stress[-1].t:.4f}"
    stress_ok = all(abs(b.w - a.w) <= R / 4 for a, b in zip(stress, stress[1:]))
    ok = rigid_ok and stress_ok
    criterion(7, ok, f"rigid: {len(path)} nodes, max residual {worst:.1e}, max step {step:.1e}; "
                     f"stress: {outcome}, continuous {stress_ok}")
    assert ok


def test_8_invariants(criterion):
    counts = tuple(component_count(chi) for chi in (0, 2, -2))
    fixtures = {
        "torus64": torus_of_revolution(64),
        "torus128": torus_of_revolution(128),
        "conformal64": conformal_torus_of_revolution(64, math.sqrt(2.0), 1.0),
    }
    fixtures["torus64x2"] = _upsampled(fixtures["torus64"], 2)
    fixtures["conformal64x2"] = _upsampled(fixtures["conformal64"], 2)
    for d in (1, 2, 3):
        fixtures[f"torus64+rho{d}"] = corrugate_along(fixtures["torus64"], d, np.full((64, 64), 0.05), 8)
    classes = {name: regular_homotopy_class(f) for name, f in fixtures.items()}
    stable = (classes["torus64"] == classes["torus128"] == classes["torus64x2"]
              == classes["torus64+rho1"] == classes["torus64+rho2"] == classes["torus64+rho3"]
              and classes["conformal64"] == classes["conformal64x2"])
    relation = all((c.q10 + c.q01 + 1) % 2 == c.q11 for c in classes.values())
    agree = total = 0
    for f in fixtures.values():
        for a, b in ((1, 0), (0, 1), (1, 1), (1, -1), (2, 1)):
            total += 1
            sl = self_linking(extract_framed_loop(f, LoopClass(a, b)))
            agree += round(sl.gauss) == sl.crossings
    ok = counts == (4, 1, 16) and stable and relation and agree == total
    criterion(8, ok, f"components {counts}; classes stable {stable}; relation {relation}; "
                     f"linking agreement {agree}/{total}")
    assert ok


@pytest.mark.slow
def test_9_determinism(default_run, tmp_path, criterion):
    first, out_a = default_run
    second = run_immerse(PipelineConfig().validate(), str(tmp_path))
    a = (out_a / "report.txt").read_bytes()
    b = (tmp_path / "report.txt").read_bytes()
    criterion(9, a == b, f"report.txt {len(a)} bytes, identical {a == b}")
    assert a == b
