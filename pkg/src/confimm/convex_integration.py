"""Parametric Nash-Kuiper convex integration on the periodic grid."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.special import j0

from .errors import (
    AmplitudeDomain,
    NegativeCoefficient,
    NotImmersion,
    ShapeError,
    ShortnessLost,
    StageBudgetExceeded,
)
from .geometry import (
    SV_MIN,
    GridTorusMap,
    MetricField,
    SymmetricTensorField,
    is_short,
    pullback_metric,
    relative_eigenvalues,
    require_immersion,
    spectral_primitive,
    sup_defect,
)

J0_FIRST_ZERO = 2.404825557695773
TOL_NEG = 1e-12


# --- defect decomposition ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DefectDecomposition:
    """``D = rho1 du^2 + rho2 dv^2 + rho3 l3^2`` with ``l3 = (du + s dv)/sqrt(2)``."""

    rho1: np.ndarray
    rho2: np.ndarray
    rho3: np.ndarray
    third_form_sign: int

    def coefficient(self, direction: int) -> np.ndarray:
        return (self.rho1, self.rho2, self.rho3)[direction - 1]

    def reconstruct(self) -> SymmetricTensorField:
        s = self.third_form_sign
        E = self.rho1 + 0.5 * self.rho3
        F = 0.5 * s * self.rho3
        G = self.rho2 + 0.5 * self.rho3
        return SymmetricTensorField.from_entries(E, F, G)


def decompose_defect(
    D: SymmetricTensorField, sign: Optional[int] = None, tol_neg: float = TOL_NEG
) -> DefectDecomposition:
    """Split a symmetric field over the forms du, dv and (du + s dv)/sqrt(2).

    ``sign`` defaults to the sign of the mean off-diagonal entry.  Raises
    NegativeCoefficient when a coefficient drops below ``-tol_neg``; tiny
    negative round-off is clipped to zero.
    """
    E, F, G = D.E, D.F, D.G
    if sign is None:
        sign = -1 if np.mean(F) < 0 else 1
    rho3 = 2.0 * sign * F
    rho1 = E - sign * F
    rho2 = G - sign * F
    lowest = min(rho1.min(), rho2.min(), rho3.min())
    if lowest < -tol_neg:
        raise NegativeCoefficient(f"primitive coefficient {lowest:.3e} < 0")
    return DefectDecomposition(
        np.maximum(rho1, 0.0), np.maximum(rho2, 0.0), np.maximum(rho3, 0.0), int(sign)
    )


# --- one-dimensional corrugation -------------------------------------------------


def inverse_j0(x: np.ndarray, iterations: int = 60) -> np.ndarray:
    """Solve ``J0(alpha) = x`` on ``[0, z0)`` by bisection, ``x`` in ``(0, 1]``."""
    x = np.asarray(x, dtype=float)
    lo = np.zeros_like(x)
    hi = np.full_like(x, J0_FIRST_ZERO)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        above = j0(mid) > x
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    alpha = 0.5 * (lo + hi)
    return np.where(x >= 1.0, 0.0, alpha)


def _direction_vectors(direction: int, sign: int):
    """(V, W, c): line direction, kernel direction of the form, and l(V)^2."""
    if direction == 1:
        return (1.0, 0.0), (0.0, 1.0), 1.0
    if direction == 2:
        return (0.0, 1.0), (1.0, 0.0), 1.0
    if direction == 3:
        return (1.0, float(sign)), (1.0, -float(sign)), 2.0
    raise ValueError(f"direction must be 1, 2 or 3, got {direction}")


def _shear(a: np.ndarray, sign: int, inverse: bool = False) -> np.ndarray:
    """Re-index so that diagonal lines (j, k0 + sign*j) become columns ``[:, k0]``."""
    n = a.shape[0]
    j = np.arange(n)[:, None]
    k = np.arange(n)[None, :]
    if not inverse:
        return a[j, (k + sign * j) % n]
    out = np.empty_like(a)
    out[j, (k + sign * j) % n] = a
    return out


def _line_phase(n: int, direction: int, sign: int) -> np.ndarray:
    """Corrugation phase ``l(x) / l(V)`` on the grid; integer steps per line period."""
    j = np.arange(n)[:, None]
    k = np.arange(n)[None, :]
    if direction == 1:
        return np.broadcast_to(j / n, (n, n))
    if direction == 2:
        return np.broadcast_to(k / n, (n, n))
    return (j + sign * k) / (2.0 * n)


def unit_normal(jac: np.ndarray) -> np.ndarray:
    nrm = np.cross(jac[..., 0], jac[..., 1])
    length = np.linalg.norm(nrm, axis=-1)
    if np.min(length) < 1e-8:
        raise NotImmersion(f"degenerate normal (|fu x fv| = {np.min(length):.2e})")
    return nrm / length[..., None]


def corrugate_along(
    f: GridTorusMap,
    direction: int,
    rho: np.ndarray,
    N: int,
    sign: int = 1,
    sv_min: float = SV_MIN,
) -> GridTorusMap:
    """Add ``rho * l_i (x) l_i`` to the induced metric by a frequency-N corrugation.

    Along every closed grid line of direction ``V_i`` the derivative is replaced by
    ``v_par + r (cos(a cos 2 pi N s) t + sin(a cos 2 pi N s) nu)`` where ``v_par`` is
    the part of ``df(V)`` along ``df(W)`` (``W`` spans ``ker l_i``), ``t`` the unit
    remainder, ``r^2 = |v - v_par|^2 + c rho`` and ``J0(a) = |v - v_par| / r``.
    The new line is the zero-mean periodic primitive of that derivative after its
    mean (the closure drift) is removed.
    """
    n = f.n
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (n, n):
        raise ShapeError(f"rho must have shape {(n, n)}, got {rho.shape}")
    if N <= 0 or N % 2:
        raise ValueError(f"frequency must be a positive even integer, got {N}")
    if np.min(rho) < -TOL_NEG:
        raise NegativeCoefficient(f"rho has negative values ({np.min(rho):.3e})")
    rho = np.maximum(rho, 0.0)
    if not np.any(rho > 0):
        return f
    require_immersion(f, sv_min)

    V, W, c = _direction_vectors(direction, sign)
    jac = f.jacobian
    v = jac @ np.asarray(V)
    w = jac @ np.asarray(W)
    nu = unit_normal(jac)

    v_par = (np.einsum("...a,...a", v, w) / np.einsum("...a,...a", w, w))[..., None] * w
    v_perp = v - v_par
    speed = np.linalg.norm(v_perp, axis=-1)
    r = np.sqrt(speed ** 2 + c * rho)
    ratio = speed / r
    if np.any(ratio > 1.0 + 1e-12):
        raise AmplitudeDomain("target speed below current speed")
    alpha = inverse_j0(np.minimum(ratio, 1.0))
    t = v_perp / speed[..., None]

    theta = alpha * np.cos(2 * np.pi * N * _line_phase(n, direction, sign))
    new = v_par + r[..., None] * (np.cos(theta)[..., None] * t + np.sin(theta)[..., None] * nu)
    h = new - v

    # the line parameter advances by 1/n per sample along V in every direction
    if direction == 1:
        disp = spectral_primitive(h, axis=0)
    elif direction == 2:
        disp = spectral_primitive(h, axis=1)
    else:
        disp = _shear(spectral_primitive(_shear(h, sign), axis=0), sign, inverse=True)
    return GridTorusMap(f.values + disp)


# --- shortness ------------------------------------------------------------------


def make_short(f: GridTorusMap, metrics: Sequence[MetricField], margin: float = 0.1) -> GridTorusMap:
    """Scale ``f`` so that ``(c f)*h <= (1 - margin) g`` for every metric in the list."""
    if not metrics:
        raise ValueError("need at least one metric")
    if not 0 <= margin < 1:
        raise ValueError(f"margin must lie in [0, 1), got {margin}")
    require_immersion(f)
    P = pullback_metric(f)
    worst = max(float(np.max(relative_eigenvalues(P, g)[1])) for g in metrics)
    return f.scaled(math.sqrt((1.0 - margin) / worst))


def metric_defect(f: GridTorusMap, g: SymmetricTensorField) -> SymmetricTensorField:
    if f.n != g.n:
        raise ShapeError(f"resolution mismatch: map {f.n}, metric {g.n}")
    return SymmetricTensorField(g.data - pullback_metric(f).data)


# --- stage loop -----------------------------------------------------------------

DIRECTION_ORDER = (3, 2, 1)


def tower_plan(n: int) -> dict:
    """Default frequencies: n/32 for the diagonal, n/16 and n/8 for the axes."""
    return {3: max(2, 2 * (n // 64)), 2: max(2, 2 * (n // 32)), 1: max(2, 2 * (n // 16))}


@dataclass(frozen=True)
class StageSchedule:
    """Relaxation targets ``delta_k`` and per-direction frequencies.

    ``plan`` maps direction to N (shared by every stage) or is a list of such
    maps, one per stage.  ``c0_budget`` caps the total displacement of a run.
    With ``require_epsilon`` off, running out of stages returns the last map
    instead of raising.
    """

    deltas: tuple
    plan: object
    epsilon: float
    c0_budget: float = math.inf
    require_epsilon: bool = True
    theta: Optional[float] = None

    def __post_init__(self):
        d = np.asarray(self.deltas, dtype=float)
        if d.size == 0 or np.any(d <= 0) or np.any(d > 1) or np.any(np.diff(d) <= 0):
            raise ValueError(f"deltas must increase strictly inside (0, 1], got {self.deltas}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        plans = self.plan if isinstance(self.plan, (list, tuple)) else [self.plan]
        if len(plans) not in (1, d.size):
            raise ValueError("need one frequency map, or one per stage")
        for p in plans:
            for direction, N in p.items():
                if direction not in (1, 2, 3):
                    raise ValueError(f"unknown direction {direction}")
                if N <= 0 or N % 2:
                    raise ValueError(f"frequencies must be positive even integers, got {N}")

    @classmethod
    def geometric(cls, theta: float = 0.4, stages: int = 8, plan=None, epsilon: float = 0.05,
                  n: int = 256, **kw) -> "StageSchedule":
        if not 0 < theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        deltas = tuple(1.0 - theta ** k for k in range(1, stages + 1))
        return cls(deltas, plan if plan is not None else tower_plan(n), epsilon, theta=theta, **kw)

    @classmethod
    def single(cls, plan, epsilon: float, **kw) -> "StageSchedule":
        """One stage aimed straight at the target."""
        return cls((1.0,), plan, epsilon, **kw)

    @property
    def stages(self) -> int:
        return len(self.deltas)

    def frequencies(self, stage: int) -> dict:
        """Frequency map of stage ``stage`` (1-based)."""
        if isinstance(self.plan, (list, tuple)):
            return self.plan[0] if len(self.plan) == 1 else self.plan[stage - 1]
        return self.plan

    def check_resolution(self, n: int):
        cap = n // 8
        for k in range(1, self.stages + 1):
            for N in self.frequencies(k).values():
                if N > cap:
                    raise ValueError(f"frequency {N} exceeds the resolution cap n/8 = {cap}")

    def relaxed(self) -> "StageSchedule":
        """Same schedule with theta moved halfway to 1."""
        if self.theta is None:
            raise NegativeCoefficient("schedule has no theta to relax")
        theta = 0.5 * (1.0 + self.theta)
        deltas = tuple(1.0 - theta ** k for k in range(1, self.stages + 1))
        return StageSchedule(deltas, self.plan, self.epsilon, self.c0_budget, self.require_epsilon, theta)


@dataclass(frozen=True)
class StageRecord:
    stage: int
    direction: int
    N: int
    sup_defect: float
    displacement: float


@dataclass(frozen=True, eq=False)
class RunResult:
    map: GridTorusMap
    log: List[StageRecord]
    sup_defect: float
    converged: bool
    schedule: StageSchedule

    @property
    def displacement(self) -> float:
        return float(sum(r.displacement for r in self.log))

    def stage_defects(self) -> List[float]:
        """Defect after the last corrugation of each stage."""
        last = {}
        for r in self.log:
            last[r.stage] = r.sup_defect
        return [last[k] for k in sorted(last)]


def _third_sign(D: SymmetricTensorField) -> int:
    return -1 if np.mean(D.F) < 0 else 1


def _run_once(f0: GridTorusMap, g: MetricField, schedule: StageSchedule, sv_min: float) -> RunResult:
    P0 = pullback_metric(f0)
    gap = SymmetricTensorField(g.data - P0.data)
    sign = _third_sign(gap)
    f = f0
    log: List[StageRecord] = []
    total = 0.0
    err = sup_defect(P0, g)
    if err < schedule.epsilon:
        return RunResult(f0, log, err, True, schedule)
    for k, delta in enumerate(schedule.deltas, start=1):
        target = SymmetricTensorField(P0.data + delta * gap.data)
        _, hi = relative_eigenvalues(pullback_metric(f), target)
        if np.max(hi) > 1.0 + 1e-9:
            raise ShortnessLost(f"stage {k}: current map exceeds the stage target by {np.max(hi) - 1:.3e}")
        freqs = schedule.frequencies(k)
        for direction in DIRECTION_ORDER:
            N = freqs.get(direction)
            if N is None:
                continue
            # re-measure: earlier directions leave residue in this one
            D = SymmetricTensorField(target.data - pullback_metric(f).data)
            rho = decompose_defect(D, sign=sign, tol_neg=math.inf).coefficient(direction)
            low = float(np.min(rho))
            if low < -TOL_NEG and delta < 1.0:
                raise NegativeCoefficient(f"stage {k}, direction {direction}: coefficient {low:.3e}")
            g_next = corrugate_along(f, direction, np.maximum(rho, 0.0), N, sign, sv_min)
            moved = float(np.max(np.linalg.norm(g_next.values - f.values, axis=-1)))
            f = g_next
            total += moved
            err = sup_defect(pullback_metric(f), g)
            log.append(StageRecord(k, direction, N, err, moved))
            if total > schedule.c0_budget:
                raise StageBudgetExceeded(
                    f"displacement {total:.3e} exceeds the C0 budget {schedule.c0_budget:.3e}"
                )
        require_immersion(f, sv_min)
        if err < schedule.epsilon:
            return RunResult(f, log, err, True, schedule)
    return RunResult(f, log, err, False, schedule)


def nash_kuiper_run(
    f0: GridTorusMap,
    g: MetricField,
    schedule: StageSchedule,
    sv_min: float = SV_MIN,
    retries: int = 3,
) -> RunResult:
    """Stage loop towards ``g``; stage ``k`` aims at ``f0*h + delta_k (g - f0*h)``.

    Within a stage the defect is re-measured before each direction 3, 2, 1.
    NegativeCoefficient and ShortnessLost trigger a retry with a relaxed theta.
    """
    if f0.n != g.n:
        raise ShapeError(f"resolution mismatch: map {f0.n}, metric {g.n}")
    require_immersion(f0, sv_min)
    if not is_short(f0, g):
        _, hi = relative_eigenvalues(pullback_metric(f0), g)
        raise ShortnessLost(f"initial map is not short: induced/target eigenvalue {np.max(hi):.3f} > 1")
    schedule.check_resolution(f0.n)
    for attempt in range(retries + 1):
        try:
            result = _run_once(f0, g, schedule, sv_min)
            break
        except (NegativeCoefficient, ShortnessLost):
            if attempt == retries or schedule.theta is None:
                raise
            schedule = schedule.relaxed()
    if not result.converged and schedule.require_epsilon:
        err = StageBudgetExceeded(
            f"{schedule.stages} stages ended at sup defect {result.sup_defect:.4f} >= {schedule.epsilon}"
        )
        err.result = result
        raise err
    return result


# --- sweep over a Teichmueller ball ---------------------------------------------


@dataclass(frozen=True, eq=False)
class SweepEntry:
    w: object
    result: RunResult
    psi: object


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("CONFIMM_THREADS", "1")))
    except ValueError:
        return 1


def parametric_sweep(f0: GridTorusMap, ball, schedule: StageSchedule, metric_of=None,
                     tol_cg: Optional[float] = None) -> List[SweepEntry]:
    """Run the stage loop for every ball sample and project each result.

    ``metric_of(w)`` gives the target metric for a modulus (default: the
    constant chart metric).  Samples run on up to ``CONFIMM_THREADS`` threads;
    results come back in sample order.
    """
    from .teich import metric_from_modulus, modulus_of_metric, TOL_CG

    n = f0.n
    metric_of = metric_of or (lambda w: metric_from_modulus(w, n))
    tol_cg = TOL_CG if tol_cg is None else tol_cg

    def one(w):
        result = nash_kuiper_run(f0, metric_of(w), schedule)
        return SweepEntry(w, result, modulus_of_metric(pullback_metric(result.map), tol_cg))

    workers = _workers()
    if workers == 1:
        return [one(w) for w in ball.samples]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, ball.samples))
