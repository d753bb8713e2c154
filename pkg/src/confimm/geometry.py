"""Sampled doubly periodic maps of the torus and the tensor fields they induce.

A map is sampled on the square grid ``(u, v) = (j/n, k/n)``, ``j, k = 0..n-1``,
and stored as an ``(n, n, 3)`` array indexed ``[j, k]``.  Tensor fields are
``(n, n, 2, 2)`` arrays of symmetric matrices in the ``(du, dv)`` basis.
Derivatives are spectral, so band-limited data is differentiated exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Union

import numpy as np

from .errors import InvalidMap, NotImmersion, ShapeError

SV_MIN = 1e-8
TOL_JET = 1e-10


@dataclass(frozen=True, eq=False)
class GridTorusMap:
    """Doubly 1-periodic map [0,1)^2 -> R^3 sampled on an n x n grid."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 3 or values.shape[2] != 3 or values.shape[0] != values.shape[1]:
            raise InvalidMap(f"expected an (n, n, 3) array, got shape {values.shape}")
        n = values.shape[0]
        if n < 8 or n % 2:
            raise InvalidMap(f"resolution must be even and >= 8, got {n}")
        if not np.all(np.isfinite(values)):
            raise InvalidMap("map contains non-finite coordinates")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @cached_property
    def jacobian(self) -> np.ndarray:
        return differentiate(self)

    @cached_property
    def metric(self) -> "MetricField":
        return pullback_metric(self)

    def scaled(self, c: float) -> "GridTorusMap":
        return GridTorusMap(c * self.values)

    def swapped(self) -> "GridTorusMap":
        """Precompose with (u, v) -> (v, u)."""
        return GridTorusMap(np.swapaxes(self.values, 0, 1))


def grid(n: int):
    """Parameter samples ``(u, v)`` as two ``(n, n)`` arrays, ``indexing='ij'``."""
    s = np.arange(n) / n
    return np.meshgrid(s, s, indexing="ij")


def spectral_derivative(a: np.ndarray, axis: int) -> np.ndarray:
    """d/ds of 1-periodic samples along ``axis``; the Nyquist mode is dropped."""
    n = a.shape[axis]
    ahat = np.fft.rfft(a, axis=axis)
    k = 2j * np.pi * np.fft.rfftfreq(n, 1.0 / n)
    k[-1] = 0.0 if n % 2 == 0 else k[-1]
    shape = [1] * a.ndim
    shape[axis] = k.size
    return np.fft.irfft(ahat * k.reshape(shape), n=n, axis=axis)


def spectral_primitive(a: np.ndarray, axis: int) -> np.ndarray:
    """Zero-mean periodic primitive along ``axis``.

    The mean of ``a`` along the axis (the closure defect of the integral) is
    discarded, as is the Nyquist mode, so ``spectral_derivative`` of the result
    returns ``a`` minus those two components.
    """
    n = a.shape[axis]
    ahat = np.fft.rfft(a, axis=axis)
    k = 2j * np.pi * np.fft.rfftfreq(n, 1.0 / n)
    inv = np.zeros_like(k)
    inv[1:] = 1.0 / k[1:]
    if n % 2 == 0:
        inv[-1] = 0.0
    shape = [1] * a.ndim
    shape[axis] = k.size
    return np.fft.irfft(ahat * inv.reshape(shape), n=n, axis=axis)


def differentiate(f: GridTorusMap) -> np.ndarray:
    """Jacobian field of ``f`` as an ``(n, n, 3, 2)`` array ``[..., :, 0] = df/du``."""
    values = f.values if isinstance(f, GridTorusMap) else np.asarray(f, dtype=float)
    if not np.all(np.isfinite(values)):
        raise InvalidMap("map contains non-finite coordinates")
    return np.stack(
        [spectral_derivative(values, 0), spectral_derivative(values, 1)], axis=-1
    )


# --- symmetric tensor fields -------------------------------------------------


@dataclass(frozen=True, eq=False)
class SymmetricTensorField:
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 4 or data.shape[2:] != (2, 2) or data.shape[0] != data.shape[1]:
            raise ShapeError(f"expected an (n, n, 2, 2) array, got shape {data.shape}")
        # symmetrize exactly; callers build fields from E, F, G anyway
        data = 0.5 * (data + np.swapaxes(data, -1, -2))
        object.__setattr__(self, "data", data)

    @classmethod
    def from_entries(cls, E, F, G, n: Optional[int] = None):
        E, F, G = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (E, F, G)))
        if E.ndim == 0:
            if n is None:
                raise ShapeError("constant entries need an explicit resolution")
            E, F, G = (np.full((n, n), x) for x in (E, F, G))
        data = np.empty(E.shape + (2, 2))
        data[..., 0, 0] = E
        data[..., 0, 1] = data[..., 1, 0] = F
        data[..., 1, 1] = G
        return cls(data)

    @classmethod
    def constant(cls, matrix, n: int):
        matrix = np.asarray(matrix, dtype=float)
        return cls(np.broadcast_to(matrix, (n, n, 2, 2)).copy())

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def E(self):
        return self.data[..., 0, 0]

    @property
    def F(self):
        return self.data[..., 0, 1]

    @property
    def G(self):
        return self.data[..., 1, 1]

    @property
    def det(self):
        return self.E * self.G - self.F ** 2

    @property
    def trace(self):
        return self.E + self.G

    def is_positive_definite(self) -> bool:
        return bool(np.all(self.det > 0) and np.all(self.trace > 0))

    def _check(self, other):
        if other.data.shape != self.data.shape:
            raise ShapeError(
                f"resolution mismatch: {self.data.shape[0]} vs {other.data.shape[0]}"
            )

    def __add__(self, other):
        self._check(other)
        return SymmetricTensorField(self.data + other.data)

    def __sub__(self, other):
        self._check(other)
        return SymmetricTensorField(self.data - other.data)

    def __mul__(self, c):
        c = np.asarray(c, dtype=float)
        if c.ndim == 2:
            c = c[..., None, None]
        return SymmetricTensorField(self.data * c)

    __rmul__ = __mul__

    def __neg__(self):
        return SymmetricTensorField(-self.data)

    def as_metric(self) -> "MetricField":
        return MetricField(self.data)


@dataclass(frozen=True, eq=False)
class MetricField(SymmetricTensorField):
    """Symmetric field expected to be positive definite.

    Positivity is not enforced at construction: ``pullback_metric`` must be
    able to hand back a degenerate field, tagged through ``flag``.
    """

    flag: Optional[str] = None

    def __mul__(self, c):
        out = SymmetricTensorField.__mul__(self, c)
        return MetricField(out.data) if np.all(np.asarray(c) > 0) else out

    __rmul__ = __mul__


def identity_metric(n: int) -> MetricField:
    return MetricField.constant(np.eye(2), n)


# --- batched 2x2 linear algebra ----------------------------------------------


def _sym_eig(a, b, c):
    """Eigenvalues of [[a, b], [b, c]] without the cancellation of tr^2/4 - det."""
    mid = 0.5 * (a + c)
    rad = np.hypot(0.5 * (a - c), b)
    return mid - rad, mid + rad


def relative_eigenvalues(a, ref):
    """Eigenvalues of ``ref^{-1} a`` for symmetric ``a`` and positive ``ref``.

    Returned as ``(low, high)`` arrays; both are real because the operator is
    self-adjoint for ``ref``.  Computed as the eigenvalues of ``C^{-1} a C^{-T}``
    with ``ref = C C^T`` (2x2 Cholesky).
    """
    a = a.data if isinstance(a, SymmetricTensorField) else np.asarray(a)
    ref = ref.data if isinstance(ref, SymmetricTensorField) else np.asarray(ref)
    E, F, G = ref[..., 0, 0], ref[..., 0, 1], ref[..., 1, 1]
    l11 = np.sqrt(E)
    l21 = F / l11
    l22 = np.sqrt(G - l21 * l21)
    a11, a12, a22 = a[..., 0, 0], a[..., 0, 1], a[..., 1, 1]
    s11 = a11 / E
    s12 = (a12 - l21 * a11 / l11) / (l11 * l22)
    s22 = (a22 - 2 * l21 * a12 / l11 + l21 * l21 * a11 / E) / (l22 * l22)
    return _sym_eig(s11, s12, s22)


def _sym_power(s: np.ndarray, p: float) -> np.ndarray:
    w, q = np.linalg.eigh(s)
    return np.einsum("...ij,...j,...kj->...ik", q, w ** p, q)


# --- operations ----------------------------------------------------------------


def pullback_metric(f: GridTorusMap) -> MetricField:
    """Induced metric ``df^T df``; degenerate samples are flagged, not rejected."""
    J = f.jacobian if isinstance(f, GridTorusMap) else differentiate(f)
    data = np.einsum("...ai,...aj->...ij", J, J)
    field = SymmetricTensorField(data)
    flag = None if field.is_positive_definite() else "NotImmersion"
    return MetricField(field.data, flag=flag)


def sup_defect(
    a: SymmetricTensorField,
    b: SymmetricTensorField,
    reference: Optional[SymmetricTensorField] = None,
) -> float:
    """Largest |eigenvalue| of ``g0^{-1}(a - b)`` over all samples.

    ``g0`` is ``reference`` when given, else ``b`` (the usual case of measuring
    an induced metric against its target).
    """
    if a.data.shape != b.data.shape:
        raise ShapeError(f"resolution mismatch: {a.n} vs {b.n}")
    ref = b if reference is None else reference
    if ref.data.shape != a.data.shape:
        raise ShapeError(f"reference resolution mismatch: {ref.n} vs {a.n}")
    lo, hi = relative_eigenvalues(a.data - b.data, ref)
    return float(max(np.max(np.abs(lo)), np.max(np.abs(hi))))


@dataclass(frozen=True)
class ImmersionReport:
    min_singular_value: float
    floor: float
    argmin: tuple

    @property
    def ok(self) -> bool:
        return self.min_singular_value > self.floor

    def __bool__(self):
        return self.ok


def singular_values(f: GridTorusMap):
    """Per-sample singular values ``(smin, smax)`` of df."""
    P = pullback_metric(f).data
    lo, hi = _sym_eig(P[..., 0, 0], P[..., 0, 1], P[..., 1, 1])
    return np.sqrt(np.maximum(lo, 0.0)), np.sqrt(hi)


def is_immersion(f: GridTorusMap, sv_min: float = SV_MIN) -> ImmersionReport:
    smin, _ = singular_values(f)
    idx = np.unravel_index(np.argmin(smin), smin.shape)
    return ImmersionReport(float(smin[idx]), sv_min, tuple(int(i) for i in idx))


def require_immersion(f: GridTorusMap, sv_min: float = SV_MIN) -> ImmersionReport:
    report = is_immersion(f, sv_min)
    if not report:
        raise NotImmersion(
            f"min singular value {report.min_singular_value:.3e} <= {sv_min:.1e} "
            f"at sample {report.argmin}"
        )
    return report


def is_short(f: GridTorusMap, g: MetricField, margin: float = 0.0) -> bool:
    """True iff ``(1 - margin) g - f*h`` is positive semidefinite everywhere."""
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    P = pullback_metric(f)
    if P.n != g.n:
        raise ShapeError(f"resolution mismatch: {P.n} vs {g.n}")
    _, hi = relative_eigenvalues(P, g)
    return bool(np.max(hi) <= 1.0 - margin + 1e-12)


def is_epsilon_isometric(f: GridTorusMap, g: MetricField, eps: float) -> bool:
    if eps <= 0:
        raise ValueError("eps must be positive")
    return sup_defect(pullback_metric(f), g) < eps


@dataclass(frozen=True, eq=False)
class FormalConformalJet:
    """Formal solution (basemap, L, lambda) with ``L^T L = lambda g0``."""

    basemap: GridTorusMap
    linear_part: np.ndarray
    factor: np.ndarray
    metric: MetricField

    def residual(self) -> float:
        LtL = np.einsum("...ai,...aj->...ij", self.linear_part, self.linear_part)
        target = self.factor[..., None, None] * self.metric.data
        return sup_defect(SymmetricTensorField(LtL), SymmetricTensorField(target), self.metric)

    def check(self, tol_jet: float = TOL_JET) -> bool:
        return float(np.min(self.factor)) > 0 and self.residual() <= tol_jet


def formalize(f: GridTorusMap, g0: MetricField, sv_min: float = SV_MIN) -> FormalConformalJet:
    """Rescale df by the g0-self-adjoint root ``(g0^{-1} f*h)^{-1/2}``.

    The result satisfies ``L^T L = g0`` so it is formal-conformal with factor 1.
    """
    require_immersion(f, sv_min)
    P = pullback_metric(f).data
    g = g0.data
    g_half = _sym_power(g, 0.5)
    g_mhalf = _sym_power(g, -0.5)
    S = g_mhalf @ P @ g_mhalf
    A = g_mhalf @ _sym_power(S, -0.5) @ g_half
    L = f.jacobian @ A
    return FormalConformalJet(f, L, np.ones(g.shape[:2]), g0)


def as_field(x: Union[SymmetricTensorField, np.ndarray]) -> SymmetricTensorField:
    return x if isinstance(x, SymmetricTensorField) else SymmetricTensorField(x)
