"""Conformality and regular-homotopy diagnostics for sampled tori."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import (
    InvalidEuler,
    MethodDisagreement,
    NearSingularProjection,
    QuadraticRelationViolated,
)
from .geometry import GridTorusMap, SymmetricTensorField, pullback_metric, relative_eigenvalues, require_immersion
from .convex_integration import unit_normal

KAPPA_CONV = 0
MIN_LOOP_SAMPLES = 64
PUSH_OFF = 1e-3
PROJECTION_SEED = 20240601


def conformal_distortion(f: GridTorusMap, g0: SymmetricTensorField) -> float:
    """Largest ratio of the eigenvalues of ``g0^{-1} f*h``; 1 for conformal maps."""
    require_immersion(f)
    lo, hi = relative_eigenvalues(pullback_metric(f), g0)
    return float(max(1.0, np.max(hi / lo)))


@dataclass(frozen=True)
class LoopClass:
    a: int
    b: int

    def __post_init__(self):
        if (self.a, self.b) == (0, 0) or math.gcd(self.a, self.b) != 1:
            raise ValueError(f"({self.a}, {self.b}) is not a primitive class")


def intersection_number(c1: LoopClass, c2: LoopClass) -> int:
    return c1.a * c2.b - c1.b * c2.a


@dataclass(frozen=True, eq=False)
class FramedPolyline:
    """Closed polyline (last vertex joins the first) with a unit normal framing."""

    points: np.ndarray
    frame: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        fr = np.asarray(self.frame, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape != fr.shape:
            raise ValueError("points and frame must both have shape (m, 3)")
        if len(pts) < MIN_LOOP_SAMPLES:
            raise ValueError(f"need at least {MIN_LOOP_SAMPLES} vertices, got {len(pts)}")
        t = vertex_tangents(pts)
        fr = fr - np.sum(fr * t, axis=1)[:, None] * t
        norm = np.linalg.norm(fr, axis=1)
        if np.min(norm) < 1e-12:
            raise ValueError("framing is tangent to the curve")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "frame", fr / norm[:, None])

    @property
    def diameter(self) -> float:
        lo, hi = self.points.min(axis=0), self.points.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def push_off(self, eps: float) -> np.ndarray:
        return self.points + eps * self.frame

    def twisted(self, turns: int) -> "FramedPolyline":
        """Rotate the framing by ``turns`` extra full turns about the tangent."""
        t = vertex_tangents(self.points)
        phase = 2 * np.pi * turns * np.arange(len(self.points)) / len(self.points)
        b = np.cross(t, self.frame)
        return FramedPolyline(self.points, np.cos(phase)[:, None] * self.frame + np.sin(phase)[:, None] * b)


def vertex_tangents(points: np.ndarray) -> np.ndarray:
    d = np.roll(points, -1, axis=0) - np.roll(points, 1, axis=0)
    return d / np.linalg.norm(d, axis=1)[:, None]


def _upsampled(f: GridTorusMap, factor: int) -> GridTorusMap:
    n = f.n
    m = n * factor
    coef = np.fft.fft2(f.values, axes=(0, 1))
    big = np.zeros((m, m, 3), dtype=complex)
    h = n // 2
    idx = np.r_[0:h, m - h:m]
    src = np.r_[0:h, n - h:n]
    big[np.ix_(idx, idx)] = coef[np.ix_(src, src)]
    return GridTorusMap(np.real(np.fft.ifft2(big, axes=(0, 1))) * factor * factor)


def extract_framed_loop(f: GridTorusMap, c: LoopClass) -> FramedPolyline:
    """Sample ``t -> f(a t, b t)`` at the grid points it passes through, framed by
    the surface normal."""
    require_immersion(f)
    if f.n < MIN_LOOP_SAMPLES:
        f = _upsampled(f, -(-MIN_LOOP_SAMPLES // f.n))
    n = f.n
    k = np.arange(n)
    j_idx, k_idx = (c.a * k) % n, (c.b * k) % n
    normal = unit_normal(f.jacobian)
    return FramedPolyline(f.values[j_idx, k_idx], normal[j_idx, k_idx])


# --- self-linking ------------------------------------------------------------------


def _unit(v):
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return np.divide(v, n, out=np.zeros_like(v), where=n > 0)


def writhe(points: np.ndarray) -> float:
    """Exact writhe of a closed polyline (sum of segment-pair solid angles)."""
    p1 = points
    p2 = np.roll(points, -1, axis=0)
    m = len(points)
    i, j = np.triu_indices(m, k=2)
    keep = ~((i == 0) & (j == m - 1))
    i, j = i[keep], j[keep]
    a, b, c, d = p1[i], p2[i], p1[j], p2[j]
    r13, r14, r23, r24 = c - a, d - a, c - b, d - b
    n1 = _unit(np.cross(r13, r14))
    n2 = _unit(np.cross(r14, r24))
    n3 = _unit(np.cross(r24, r23))
    n4 = _unit(np.cross(r23, r13))

    def asin(x, y):
        return np.arcsin(np.clip(np.sum(x * y, axis=1), -1.0, 1.0))

    omega = asin(n1, n2) + asin(n2, n3) + asin(n3, n4) + asin(n4, n1)
    sign = np.sign(np.sum(np.cross(d - c, b - a) * r13, axis=1))
    return float(2.0 * np.sum(omega * sign) / (4 * np.pi))


def twist(loop: FramedPolyline) -> float:
    """Total rotation of the framing against a parallel-transported frame, in turns."""
    pts = loop.points
    e = _unit(np.roll(pts, -1, axis=0) - pts)
    # frame on each edge: vertex frames averaged and made normal to the edge
    u = loop.frame + np.roll(loop.frame, -1, axis=0)
    u = _unit(u - np.sum(u * e, axis=1)[:, None] * e)
    total = 0.0
    m = len(pts)
    for k in range(m):
        t0, t1 = e[k - 1], e[k]
        transported = _transport(u[k - 1], t0, t1)
        total += math.atan2(np.dot(np.cross(transported, u[k]), t1), np.dot(transported, u[k]))
    return total / (2 * np.pi)


def _transport(v, t0, t1):
    """Rotate ``v`` by the minimal rotation taking ``t0`` to ``t1``."""
    axis = np.cross(t0, t1)
    s = np.linalg.norm(axis)
    cth = float(np.dot(t0, t1))
    if s < 1e-15:
        return v
    axis = axis / s
    return v * cth + np.cross(axis, v) * s + axis * np.dot(axis, v) * (1 - cth)


def _projection_directions(seed: int):
    yield _unit(np.array([0.2113, 0.3761, 0.9021]))
    rng = np.random.default_rng(seed)
    while True:
        yield _unit(rng.normal(size=3))


def crossing_linking(c1: np.ndarray, c2: np.ndarray, seed: int = PROJECTION_SEED, attempts: int = 12) -> int:
    """Linking number of two closed polylines from signed crossings of a projection."""
    dirs = _projection_directions(seed)
    for _ in range(attempts):
        d = next(dirs)
        value = _crossings(c1, c2, d)
        if value is not None:
            return value
    raise NearSingularProjection(f"no regular projection found in {attempts} directions")


def _crossings(c1, c2, d) -> Optional[int]:
    ex = _unit(np.cross(d, [1.0, 0.0, 0.0] if abs(d[0]) < 0.9 else [0.0, 1.0, 0.0]))
    ey = np.cross(d, ex)
    a0 = c1
    a1 = np.roll(c1, -1, axis=0)
    b0 = c2
    b1 = np.roll(c2, -1, axis=0)

    def plane(x):
        return np.stack([x @ ex, x @ ey], axis=-1)

    P, Pd = plane(a0)[:, None, :], plane(a1 - a0)[:, None, :]
    Q, Qd = plane(b0)[None, :, :], plane(b1 - b0)[None, :, :]
    denom = Pd[..., 0] * Qd[..., 1] - Pd[..., 1] * Qd[..., 0]
    w = Q - P
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (w[..., 0] * Qd[..., 1] - w[..., 1] * Qd[..., 0]) / denom
        t = (w[..., 0] * Pd[..., 1] - w[..., 1] * Pd[..., 0]) / denom
    hit = (s >= 0) & (s < 1) & (t >= 0) & (t < 1)
    scale = np.abs(Pd).max() * np.abs(Qd).max()
    near = (np.abs(denom) < 1e-13 * scale) | (np.minimum(np.abs(s), np.abs(1 - s)) < 1e-11) \
        | (np.minimum(np.abs(t), np.abs(1 - t)) < 1e-11)
    close = (s > -1e-9) & (s < 1 + 1e-9) & (t > -1e-9) & (t < 1 + 1e-9)
    if np.any(near & close):
        return None
    ii, jj = np.nonzero(hit)
    if len(ii) == 0:
        return 0
    xa = a0[ii] + s[ii, jj][:, None] * (a1 - a0)[ii]
    xb = b0[jj] + t[ii, jj][:, None] * (b1 - b0)[jj]
    height = (xa - xb) @ d
    if np.min(np.abs(height)) < 1e-14:
        return None
    over = np.where(height[:, None] > 0, (a1 - a0)[ii], (b1 - b0)[jj])
    under = np.where(height[:, None] > 0, (b1 - b0)[jj], (a1 - a0)[ii])
    signs = np.sign(np.cross(over, under) @ d)
    total = int(np.sum(signs))
    if total % 2:
        return None
    return total // 2


@dataclass(frozen=True)
class SelfLinking:
    gauss: float
    crossings: int

    @property
    def value(self) -> int:
        return self.crossings


def self_linking(loop: FramedPolyline, push_off: float = PUSH_OFF) -> SelfLinking:
    """``Lk(gamma, gamma + eps nu)`` as writhe + twist and as a crossing count."""
    gauss = writhe(loop.points) + twist(loop)
    eps = push_off * loop.diameter
    other = loop.push_off(eps)
    crossings = crossing_linking(loop.points, other)
    if round(gauss) != crossings or abs(gauss - round(gauss)) > 0.25:
        raise MethodDisagreement(
            f"writhe + twist = {gauss:.4f} but crossing count gives {crossings}; refine the sampling"
        )
    return SelfLinking(gauss, crossings)


def spin_quadratic_form(f: GridTorusMap, c: LoopClass, kappa: int = KAPPA_CONV) -> int:
    loop = extract_framed_loop(f, c)
    return (self_linking(loop).value + kappa) % 2


@dataclass(frozen=True)
class HomotopyClass:
    q10: int
    q01: int
    q11: int

    @property
    def pair(self) -> Tuple[int, int]:
        return (self.q10, self.q01)

    @property
    def arf(self) -> int:
        """Majority value of q over the three nonzero classes."""
        return int(self.q10 + self.q01 + self.q11 >= 2)


def regular_homotopy_class(f: GridTorusMap, kappa: int = KAPPA_CONV) -> HomotopyClass:
    q10 = spin_quadratic_form(f, LoopClass(1, 0), kappa)
    q01 = spin_quadratic_form(f, LoopClass(0, 1), kappa)
    q11 = spin_quadratic_form(f, LoopClass(1, 1), kappa)
    dot = intersection_number(LoopClass(1, 0), LoopClass(0, 1))
    if (q10 + q01 + dot - q11) % 2:
        raise QuadraticRelationViolated(f"q(1,1) = {q11} but q(1,0) + q(0,1) + 1 = {(q10 + q01 + dot) % 2}")
    return HomotopyClass(q10, q01, q11)


def component_count(chi: int) -> int:
    """Number of regular homotopy classes of immersions of a closed orientable
    surface with Euler characteristic ``chi``."""
    if isinstance(chi, bool) or int(chi) != chi or chi % 2 or chi > 2:
        raise InvalidEuler(f"Euler characteristic must be an even integer <= 2, got {chi}")
    return 2 ** (2 - int(chi))
