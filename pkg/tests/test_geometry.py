import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from confimm.errors import InvalidMap, NotImmersion, ShapeError
from confimm.geometry import (
    GridTorusMap,
    MetricField,
    SymmetricTensorField,
    differentiate,
    formalize,
    grid,
    identity_metric,
    is_epsilon_isometric,
    is_immersion,
    is_short,
    pullback_metric,
    spectral_derivative,
    spectral_primitive,
    sup_defect,
)
from confimm.surfaces import pinched_map, torus_of_revolution


def sym_fields(n=8, lo=-3.0, hi=3.0):
    entries = hnp.arrays(np.float64, (n, n, 3), elements=st.floats(lo, hi))
    return entries.map(lambda a: SymmetricTensorField.from_entries(a[..., 0], a[..., 1], a[..., 2]))


def test_rejects_bad_maps():
    with pytest.raises(InvalidMap):
        GridTorusMap(np.zeros((7, 7, 3)))
    with pytest.raises(InvalidMap):
        GridTorusMap(np.zeros((6, 6, 3)))
    bad = np.zeros((8, 8, 3))
    bad[0, 0, 0] = np.nan
    with pytest.raises(InvalidMap):
        GridTorusMap(bad)


def test_derivative_of_band_limited_map():
    u, v = grid(32)
    f = GridTorusMap(np.stack([np.sin(2 * np.pi * u), 0 * u, 0 * u], axis=-1))
    J = differentiate(f)
    assert np.max(np.abs(J[..., 0, 0] - 2 * np.pi * np.cos(2 * np.pi * u))) < 1e-12
    assert np.max(np.abs(J[..., :, 1])) < 1e-12
    assert np.max(np.abs(differentiate(GridTorusMap(np.ones((16, 16, 3)))))) == 0


def test_torus_jacobian_and_metric(torus128):
    u, v = grid(128)
    speed = np.linalg.norm(torus128.jacobian[..., 0], axis=-1)
    assert np.max(np.abs(speed - 2 * np.pi * (2 + np.cos(2 * np.pi * v)))) <= 1e-10
    P = pullback_metric(torus128)
    assert np.allclose(P.E, (2 * np.pi) ** 2 * (2 + np.cos(2 * np.pi * v)) ** 2, atol=1e-9)
    assert np.allclose(P.F, 0, atol=1e-9)
    assert np.allclose(P.G, (2 * np.pi) ** 2, atol=1e-9)
    assert P.flag is None


def test_metric_homogeneity_and_swap(torus64):
    P = pullback_metric(torus64)
    assert np.allclose(pullback_metric(torus64.scaled(3.0)).data, 9 * P.data)
    S = pullback_metric(torus64.swapped())
    assert np.allclose(S.E, P.G.T) and np.allclose(S.G, P.E.T)


def test_degenerate_metric_is_flagged():
    assert pullback_metric(GridTorusMap(np.ones((8, 8, 3)))).flag == "NotImmersion"


@given(a=st.floats(0.5, 4.0), b=st.floats(-2, 2), c=st.floats(-2, 2))
def test_differentiate_is_linear(a, b, c):
    u, v = grid(16)
    f = np.stack([np.sin(2 * np.pi * u), np.cos(2 * np.pi * v), np.sin(2 * np.pi * (u + v))], -1)
    g = np.stack([np.cos(4 * np.pi * u), u * 0, np.sin(2 * np.pi * v)], -1)
    lhs = differentiate(GridTorusMap(a * f + b * g + c))
    rhs = a * differentiate(GridTorusMap(f)) + b * differentiate(GridTorusMap(g))
    assert np.allclose(lhs, rhs, atol=1e-9)


def test_swap_conjugation(torus64):
    J = torus64.jacobian
    Js = torus64.swapped().jacobian
    assert np.allclose(Js[..., 0], np.swapaxes(J[..., 1], 0, 1))


def test_primitive_inverts_derivative():
    u, v = grid(32)
    a = np.sin(2 * np.pi * u) * np.cos(4 * np.pi * v)
    assert np.allclose(spectral_primitive(spectral_derivative(a, 0), 0), a, atol=1e-12)


def test_sup_defect_examples():
    g0 = identity_metric(8)
    assert sup_defect(g0, g0) == 0
    assert sup_defect(g0 * 2.0, g0) == pytest.approx(1.0)
    t = 0.37
    a = SymmetricTensorField.from_entries(1 + t, 0.0, 1.0, n=8)
    assert sup_defect(a, g0) == pytest.approx(t)
    with pytest.raises(ShapeError):
        sup_defect(g0, identity_metric(16))


@given(a=sym_fields(), b=sym_fields(), c=sym_fields())
def test_sup_defect_pseudometric(a, b, c):
    ref = identity_metric(8)
    dab, dba = sup_defect(a, b, ref), sup_defect(b, a, ref)
    assert dab == pytest.approx(dba)
    assert sup_defect(a, a, ref) == 0
    assert sup_defect(a, c, ref) <= dab + sup_defect(b, c, ref) + 1e-9


@given(hnp.arrays(np.float64, (8, 8, 3), elements=st.floats(-1, 1)))
def test_pullback_is_psd(noise):
    base = torus_of_revolution(8).values
    P = pullback_metric(GridTorusMap(base + 0.1 * noise))
    assert np.all(np.linalg.eigvalsh(P.data) > -1e-9)
    assert bool(is_immersion(GridTorusMap(base + 0.1 * noise), 0.0)) == bool(np.all(P.det > 0))


def test_immersion_reports(torus64):
    rep = is_immersion(torus64)
    assert rep.min_singular_value == pytest.approx(2 * np.pi, rel=1e-9)
    assert not is_immersion(GridTorusMap(np.zeros((8, 8, 3))))
    assert not is_immersion(pinched_map(64))


def test_short_examples(torus64):
    P = pullback_metric(torus64)
    assert is_short(torus64, MetricField(2 * P.data), 0.1)
    assert is_short(torus64, P, 0.0)
    assert not is_short(torus64, P, 0.01)


def test_epsilon_isometric_examples(torus64):
    P = pullback_metric(torus64)
    assert is_epsilon_isometric(torus64, P, 1e-12)
    assert is_epsilon_isometric(torus64, MetricField(P.data / 1.03), 0.05)
    assert not is_epsilon_isometric(torus64, MetricField(P.data / 1.07), 0.05)


@given(hnp.arrays(np.float64, (8, 8, 3), elements=st.floats(0.05, 3.0)), st.floats(0.01, 1.0))
def test_predicates_agree_with_brute_force(entries, eps):
    E, G = entries[..., 0] + 1, entries[..., 2] + 1
    F = 0.5 * np.sqrt(E * G) * np.tanh(entries[..., 1])
    g = MetricField.from_entries(E, F, G)
    f = torus_of_revolution(8).scaled(0.05)
    P = pullback_metric(f).data
    brute_short = all(
        np.min(np.linalg.eigvalsh(g.data[j, k] - P[j, k])) >= -1e-12 for j in range(8) for k in range(8)
    )
    assert is_short(f, g) == brute_short
    ginv = np.linalg.inv(g.data)
    brute_sup = max(np.max(np.abs(np.linalg.eigvals(ginv[j, k] @ (P[j, k] - g.data[j, k]))))
                    for j in range(8) for k in range(8))
    assert is_epsilon_isometric(f, g, eps) == (brute_sup < eps)


def test_formalize(torus64):
    flat = identity_metric(64)
    jet = formalize(torus64, flat)
    assert jet.residual() <= 1e-10 and jet.check()
    P = pullback_metric(torus64)
    same = formalize(torus64, P)
    assert np.allclose(same.linear_part, torus64.jacobian, atol=1e-9)
    quarter = formalize(torus64, MetricField(P.data / 4))
    assert np.allclose(quarter.linear_part, torus64.jacobian / 2, atol=1e-9)
    assert np.allclose(quarter.factor, 1.0)
    with pytest.raises(NotImmersion):
        formalize(pinched_map(64), identity_metric(64))
