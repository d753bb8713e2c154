import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp
from scipy.special import j0

from confimm.config import PipelineConfig
from confimm.convex_integration import (
    StageSchedule,
    corrugate_along,
    decompose_defect,
    inverse_j0,
    make_short,
    metric_defect,
    nash_kuiper_run,
    parametric_sweep,
    tower_plan,
)
from confimm.errors import NegativeCoefficient, ShapeError, ShortnessLost
from confimm.geometry import (
    MetricField,
    SymmetricTensorField,
    identity_metric,
    is_short,
    pullback_metric,
    relative_eigenvalues,
    sup_defect,
)
from confimm.pipeline import PsiModel, base_torus
from confimm.surfaces import torus_of_revolution
from confimm.teich import TeichBall, metric_from_modulus


def const(m, n=8):
    return SymmetricTensorField.constant(np.array(m, dtype=float), n)


@pytest.mark.parametrize(
    "D, expected, sign",
    [
        ([[1, 0], [0, 1]], (1, 1, 0), 1),
        ([[2, 1], [1, 2]], (1, 1, 2), 1),
        ([[1, -0.5], [-0.5, 1]], (0.5, 0.5, 1), -1),
    ],
)
def test_decomposition_examples(D, expected, sign):
    dec = decompose_defect(const(D))
    assert dec.third_form_sign == sign
    for i, value in enumerate(expected, start=1):
        assert np.allclose(dec.coefficient(i), value)


@given(hnp.arrays(np.float64, (8, 8, 3), elements=st.floats(0, 5)), st.sampled_from([1, -1]))
def test_decomposition_reconstructs(entries, sign):
    # diagonally dominant fields have nonnegative coefficients for either sign
    F = 0.5 * sign * np.minimum(entries[..., 0], entries[..., 2]) * np.tanh(entries[..., 1])
    D = SymmetricTensorField.from_entries(entries[..., 0], F, entries[..., 2])
    dec = decompose_defect(D, sign=sign)
    assert np.max(np.abs(dec.reconstruct().data - D.data)) <= 1e-12
    assert all(np.all(dec.coefficient(i) >= 0) for i in (1, 2, 3))


def test_decomposition_rejects_negative():
    with pytest.raises(NegativeCoefficient):
        decompose_defect(const([[0.1, 1.0], [1.0, 0.1]]))


@given(st.floats(1e-6, 1.0))
def test_inverse_j0(x):
    a = inverse_j0(np.array([x]))[0]
    assert 0 <= a < 2.405
    assert j0(a) == pytest.approx(x, abs=1e-12)


def test_zero_rho_is_identity(torus64):
    out = corrugate_along(torus64, 1, np.zeros((64, 64)), 8)
    assert out is torus64 or np.array_equal(out.values, torus64.values)


def test_tiny_rho_is_near_identity(torus64):
    for direction in (1, 2, 3):
        out = corrugate_along(torus64, direction, np.full((64, 64), 1e-10), 8)
        assert np.max(np.abs(out.values - torus64.values)) < 1e-4


def test_frequency_must_be_even(torus64):
    with pytest.raises(ValueError):
        corrugate_along(torus64, 1, np.ones((64, 64)), 7)


def _single(n, direction, N, rho=40.0):
    f = torus_of_revolution(n)
    V = {1: np.array([1.0, 0.0]), 2: np.array([0.0, 1.0]), 3: np.array([1.0, 1.0]) / math.sqrt(2)}[direction]
    out = corrugate_along(f, direction, np.full((n, n), rho), N)
    target = MetricField(pullback_metric(f).data + rho * np.outer(V, V))
    full = sup_defect(pullback_metric(out), target)
    W = np.array([1.0, 0.0]) if direction == 1 else np.array([0.0, 1.0]) if direction == 2 else np.array([1.0, 1.0])
    d = pullback_metric(out).data - target.data
    directional = np.max(np.abs(np.einsum("...ij,i,j", d, W, W)))
    moved = np.max(np.linalg.norm(out.values - f.values, axis=-1))
    return full, directional, moved


@pytest.mark.parametrize("direction", [1, 2, 3])
def test_first_order_decay(direction):
    a = _single(256, direction, 8)
    b = _single(256, direction, 16)
    assert 1.6 <= a[0] / b[0] <= 2.4
    assert 1.6 <= a[2] / b[2] <= 2.4


def test_line_direction_is_exact():
    _, directional, _ = _single(128, 1, 8)
    assert directional < 1e-8


def test_make_short_examples(torus64):
    P = pullback_metric(torus64)
    c = np.max(make_short(torus64, [P], 0.1).values) / np.max(torus64.values)
    assert c == pytest.approx(math.sqrt(0.9))
    c2 = np.max(make_short(torus64, [P, MetricField(4 * P.data)], 0.1).values) / np.max(torus64.values)
    assert c2 == pytest.approx(c)
    ball = TeichBall.sampled(1j, 0.2, 13)
    metrics = [metric_from_modulus(w, 64) for w in ball.samples]
    short = make_short(torus64, metrics, 0.1)
    assert all(is_short(short, g, 0.1 - 1e-9) for g in metrics)


def test_metric_defect_examples(torus64):
    P = pullback_metric(torus64)
    assert np.max(np.abs(metric_defect(torus64, P).data)) == 0
    assert np.allclose(metric_defect(torus64, MetricField(2 * P.data)).data, P.data)
    g = identity_metric(64)
    D = metric_defect(make_short(torus64, [g], 0.1), g)
    assert D.is_positive_definite()
    with pytest.raises(ShapeError):
        metric_defect(torus64, identity_metric(32))


def test_schedule_validation():
    s = StageSchedule.geometric(0.4, 3, {1: 8}, 0.05)
    assert s.deltas == pytest.approx((0.6, 0.84, 0.936))
    with pytest.raises(ValueError):
        StageSchedule((0.5, 0.4), {1: 8}, 0.05)
    with pytest.raises(ValueError):
        StageSchedule((0.5,), {1: 7}, 0.05)
    with pytest.raises(ValueError):
        StageSchedule.single({1: 64}, 0.05).check_resolution(256)
    assert max(tower_plan(256).values()) == 32


def test_run_on_isometric_target(torus64):
    result = nash_kuiper_run(torus64, pullback_metric(torus64), StageSchedule.geometric(n=64))
    assert result.map is torus64 and result.log == [] and result.converged


def test_run_requires_short(torus64):
    with pytest.raises(ShortnessLost):
        nash_kuiper_run(torus64, identity_metric(64), StageSchedule.geometric(n=64))


@pytest.fixture(scope="module")
def model256():
    cfg = PipelineConfig(grid=256)
    return PsiModel.build(cfg, base_torus(cfg))


def test_doubling_frequencies_does_not_increase_defect(model256):
    g = model256.family(1j)
    errs = []
    for scale in (1, 2, 4):
        plan = {3: 2 * scale, 2: 4 * scale, 1: 8 * scale}
        errs.append(nash_kuiper_run(model256.short, g, StageSchedule.single(plan, 0.05, require_epsilon=False)).sup_defect)
    assert errs[0] >= errs[1] >= errs[2]


def test_stage_log_and_displacement(model256):
    schedule = StageSchedule.single(tower_plan(256), 0.05, require_epsilon=False)
    result = nash_kuiper_run(model256.short, model256.family(1j), schedule)
    assert [r.direction for r in result.log] == [3, 2, 1]
    moved = np.max(np.linalg.norm(result.map.values - model256.short.values, axis=-1))
    assert moved <= result.displacement + 1e-12


def test_sweep_degenerate_ball(model256):
    ball = TeichBall.sampled(1j, 0.0)
    schedule = StageSchedule.single(tower_plan(256), 0.05, require_epsilon=False)
    table = parametric_sweep(model256.short, ball, schedule, metric_of=model256.family)
    assert len(table) == 1
    assert abs(table[0].psi.z - 1j) <= table[0].result.displacement


def test_sweep_is_deterministic_across_threads(model256, monkeypatch):
    ball = TeichBall.sampled(1j, 0.2, 5)
    schedule = StageSchedule.single({3: 4, 2: 8, 1: 16}, 0.05, require_epsilon=False)
    serial = parametric_sweep(model256.short, ball, schedule, metric_of=model256.family)
    monkeypatch.setenv("CONFIMM_THREADS", "3")
    threaded = parametric_sweep(model256.short, ball, schedule, metric_of=model256.family)
    for a, b in zip(serial, threaded):
        assert a.psi == b.psi
        assert np.array_equal(a.result.map.values, b.result.map.values)
