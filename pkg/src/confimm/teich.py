"""Genus-one Teichmueller chart.

Points of the chart are moduli ``w`` in the upper half plane.  The metric
family ``g_w = |dz + mu dzbar|^2`` with ``mu = (i - w)/(i + w)`` gives a global
section, and ``modulus_of_metric`` is the projection back: it finds the
harmonic representative of ``[du]``, completes it to a holomorphic form and
returns the ratio of its periods.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import IllConditionedMetric, ModulusSolveFailed, NotInUpperHalfPlane, ShapeError
from .geometry import MetricField, SymmetricTensorField, spectral_derivative

TOL_CG = 1e-10
MAX_CONDITION = 1e8


@dataclass(frozen=True)
class Modulus:
    re: float
    im: float

    def __post_init__(self):
        if not (self.im > 0):
            raise NotInUpperHalfPlane(f"modulus {self.re} + {self.im}i is not in H^2")

    @classmethod
    def from_complex(cls, z: complex) -> "Modulus":
        return cls(float(z.real), float(z.imag))

    @property
    def z(self) -> complex:
        return complex(self.re, self.im)

    def __str__(self):
        sign = "+" if self.im >= 0 else "-"
        return f"{self.re:.6g}{sign}{abs(self.im):.6g}i"


def as_modulus(w) -> Modulus:
    if isinstance(w, Modulus):
        return w
    return Modulus.from_complex(complex(w))


def chart_distance(w1, w2) -> float:
    """Euclidean distance in the (re, im) chart."""
    return abs(as_modulus(w1).z - as_modulus(w2).z)


def beltrami_coefficient(w) -> complex:
    z = as_modulus(w).z
    return (1j - z) / (1j + z)


def metric_from_modulus(w, n: int) -> MetricField:
    """Constant metric ``|dz + mu dzbar|^2`` on ``dz = du + i dv``.

    ``E = |1 + mu|^2``, ``F = 2 Im mu``, ``G = |1 - mu|^2``; its determinant is
    ``(1 - |mu|^2)^2``.
    """
    mu = beltrami_coefficient(w)
    E = abs(1 + mu) ** 2
    F = 2.0 * mu.imag
    G = abs(1 - mu) ** 2
    return MetricField.from_entries(E, F, G, n=n)


@dataclass(frozen=True)
class TeichBall:
    center: Modulus
    radius: float
    samples: tuple

    def __post_init__(self):
        if self.radius < 0 or self.radius >= self.center.im:
            raise NotInUpperHalfPlane(
                f"ball radius {self.radius} must lie in [0, im(center) = {self.center.im})"
            )
        if self.center not in self.samples:
            raise ValueError("ball samples must contain the center")
        for w in self.samples:
            if chart_distance(w, self.center) > self.radius * (1 + 1e-12):
                raise ValueError(f"sample {w} lies outside the ball")

    @classmethod
    def sampled(cls, center, radius: float, count: int = 13) -> "TeichBall":
        """Center, then rings at radius r/2 and r (4 and count - 5 points)."""
        center = as_modulus(center)
        if radius == 0 or count <= 1:
            return cls(center, float(radius), (center,))
        if count < 6:
            rings = [(radius, count - 1)]
        else:
            rings = [(0.5 * radius, 4), (radius, count - 5)]
        pts = [center]
        for rad, m in rings:
            for k in range(m):
                phase = 2 * math.pi * k / m + (math.pi / m if rad < radius else 0.0)
                pts.append(Modulus.from_complex(center.z + rad * complex(math.cos(phase), math.sin(phase))))
        return cls(center, float(radius), tuple(pts))

    def contains(self, w) -> bool:
        return chart_distance(w, self.center) <= self.radius * (1 + 1e-12)

    def project(self, w) -> Modulus:
        """Nearest point of the closed ball."""
        z = as_modulus(w).z if not isinstance(w, complex) else w
        d = z - self.center.z
        if abs(d) <= self.radius:
            return Modulus.from_complex(z)
        return Modulus.from_complex(self.center.z + d * (self.radius / abs(d)))


# --- harmonic forms ----------------------------------------------------------------


def conductivity(g: SymmetricTensorField) -> np.ndarray:
    """``sqrt(det g) g^{-1}``: the conformally invariant coefficient of the
    Dirichlet energy, with unit determinant."""
    det = g.det
    if np.any(det <= 0) or np.any(g.trace <= 0):
        raise IllConditionedMetric("metric is not positive definite")
    tr = g.trace
    disc = np.sqrt(np.maximum(0.25 * tr * tr - det, 0.0))
    cond = (0.5 * tr + disc) / (0.5 * tr - disc)
    if np.max(cond) > MAX_CONDITION:
        raise IllConditionedMetric(f"metric condition number {np.max(cond):.2e} exceeds cap")
    s = np.sqrt(det)
    K = np.empty(g.data.shape)
    K[..., 0, 0] = g.G / s
    K[..., 1, 1] = g.E / s
    K[..., 0, 1] = K[..., 1, 0] = -g.F / s
    return K


def _wavenumbers(n: int):
    k = 2 * np.pi * np.fft.fftfreq(n, 1.0 / n)
    k[n // 2] = 0.0
    return k


@dataclass(frozen=True, eq=False)
class HarmonicForm:
    """Harmonic representative ``du + d phi`` of ``[du]`` and its conjugate.

    ``omega`` and ``star`` hold ``(u, v)`` components, shape ``(n, n, 2)``.
    """

    phi: np.ndarray
    omega: np.ndarray
    star: np.ndarray
    iterations: int
    residual: float

    @property
    def periods(self):
        """Periods of ``omega + i *omega`` over the u-loop and v-loop.

        Every parallel loop gives the same value for a closed form, so the
        loop quadratures are averaged over all grid loops.
        """
        a = float(np.mean(self.star[..., 0]))
        b = float(np.mean(self.star[..., 1]))
        return complex(1.0, a), complex(0.0, b)


def harmonic_form(g: SymmetricTensorField, tol_cg: float = TOL_CG, maxiter: int = 2000) -> HarmonicForm:
    """Minimize the g-Dirichlet energy of ``du + d phi`` over periodic ``phi``.

    The Euler-Lagrange operator ``-div(K grad phi)`` is discretized with spectral
    derivatives and solved by conjugate gradients, preconditioned with the FFT
    inverse of the constant-coefficient operator built from the mean of K.
    """
    n = g.n
    K = conductivity(g)
    K11, K12, K22 = K[..., 0, 0], K[..., 0, 1], K[..., 1, 1]
    ku = _wavenumbers(n)[:, None]
    kv = _wavenumbers(n)[None, :]
    symbol = K11.mean() * ku ** 2 + 2 * K12.mean() * ku * kv + K22.mean() * kv ** 2
    inv_symbol = np.zeros_like(symbol)
    nz = symbol > 1e-12 * symbol.max()
    inv_symbol[nz] = 1.0 / symbol[nz]

    def d(a, axis):
        return spectral_derivative(a, axis)

    def apply(phi):
        pu, pv = d(phi, 0), d(phi, 1)
        return -(d(K11 * pu + K12 * pv, 0) + d(K12 * pu + K22 * pv, 1))

    def precondition(r):
        return np.real(np.fft.ifft2(np.fft.fft2(r) * inv_symbol))

    b = d(K11, 0) + d(K12, 1)
    bnorm = np.linalg.norm(b)
    phi = np.zeros((n, n))
    it = 0
    if bnorm > 0:
        r = b.copy()
        z = precondition(r)
        p = z.copy()
        rz = np.vdot(r, z)
        while it < maxiter:
            if np.linalg.norm(r) <= tol_cg * bnorm:
                break
            Ap = apply(p)
            step = rz / np.vdot(p, Ap)
            phi += step * p
            r -= step * Ap
            z = precondition(r)
            rz_new = np.vdot(r, z)
            p = z + (rz_new / rz) * p
            rz = rz_new
            it += 1
        res = float(np.linalg.norm(b - apply(phi)) / bnorm)
        if res > max(tol_cg, 1e-12) * 10:
            raise ModulusSolveFailed(
                f"CG stopped after {it} iterations at relative residual {res:.2e}"
            )
    else:
        res = 0.0
    pu, pv = d(phi, 0), d(phi, 1)
    omega = np.stack([1.0 + pu, pv], axis=-1)
    Ju = K11 * omega[..., 0] + K12 * omega[..., 1]
    Jv = K12 * omega[..., 0] + K22 * omega[..., 1]
    star = np.stack([-Jv, Ju], axis=-1)
    return HarmonicForm(phi, omega, star, it, res)


def modulus_of_metric(g: SymmetricTensorField, tol_cg: float = TOL_CG) -> Modulus:
    """Conformal modulus ``tau = P_B / P_A`` of the torus ``([0,1)^2, g)``."""
    form = harmonic_form(g, tol_cg)
    pa, pb = form.periods
    tau = pb / pa
    if tau.imag < 0:
        tau = tau.conjugate()
    return Modulus.from_complex(tau)


# --- uniformization -----------------------------------------------------------------


def _periodic_potential(cu: np.ndarray, cv: np.ndarray) -> np.ndarray:
    """Least-squares periodic ``chi`` with ``grad chi = (cu, cv)`` (zero-mean data)."""
    n = cu.shape[0]
    ku = _wavenumbers(n)[:, None]
    kv = _wavenumbers(n)[None, :]
    lap = ku ** 2 + kv ** 2
    num = -1j * (ku * np.fft.fft2(cu) + kv * np.fft.fft2(cv))
    chi_hat = np.zeros_like(num)
    nz = lap > 0
    chi_hat[nz] = num[nz] / lap[nz]
    return np.real(np.fft.ifft2(chi_hat))


@dataclass(frozen=True, eq=False)
class Uniformization:
    """Conformal chart ``s = (s1, s2)`` with ``g = lambda |ds1 + tau ds2|^2``.

    ``s = (u, v) + periodic``, so ``s`` descends to a diffeomorphism of the torus
    isotopic to the identity.
    """

    tau: Modulus
    s1: np.ndarray
    s2: np.ndarray

    def chart_jacobian(self) -> np.ndarray:
        n = self.s1.shape[0]
        J = np.empty((n, n, 2, 2))
        J[..., 0, 0] = 1.0 + spectral_derivative(self.s1 - _ramp(n, 0), 0)
        J[..., 0, 1] = spectral_derivative(self.s1 - _ramp(n, 0), 1)
        J[..., 1, 0] = spectral_derivative(self.s2 - _ramp(n, 1), 0)
        J[..., 1, 1] = 1.0 + spectral_derivative(self.s2 - _ramp(n, 1), 1)
        return J

    def pullback(self, target: SymmetricTensorField) -> SymmetricTensorField:
        """Pull a constant-coefficient metric on the s-chart back to (u, v)."""
        J = self.chart_jacobian()
        return SymmetricTensorField(np.einsum("...ai,...ab,...bj->...ij", J, target.data, J))


def _ramp(n: int, axis: int) -> np.ndarray:
    s = np.arange(n) / n
    return s[:, None] * np.ones((1, n)) if axis == 0 else np.ones((n, 1)) * s[None, :]


def uniformize(g: SymmetricTensorField, tol_cg: float = TOL_CG) -> Uniformization:
    form = harmonic_form(g, tol_cg)
    pa, pb = form.periods
    a, b = pa.imag, pb.imag
    chi = _periodic_potential(form.star[..., 0] - a, form.star[..., 1] - b)
    tau = pb / pa
    orient = 1.0
    if tau.imag < 0:
        tau, orient = tau.conjugate(), -1.0
        pa = pa.conjugate()
    # zeta / P_A = u + tau v + (phi + i orient chi) / P_A
    c = (form.phi + 1j * orient * chi) / pa
    c2 = c.imag / tau.imag
    c1 = c.real - tau.real * c2
    u, v = _ramp(g.n, 0), _ramp(g.n, 1)
    return Uniformization(Modulus.from_complex(tau), u + c1, v + c2)
