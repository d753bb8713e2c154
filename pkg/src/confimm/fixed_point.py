"""Solving psi(w) = tau0 on a closed ball of the chart, with degree certificates."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    ComponentJumpSuspected,
    GapTooSmall,
    HypothesisViolated,
    MaxEvaluations,
    NoCertificate,
)
from .teich import Modulus, as_modulus

TOL = 1e-3
BOUNDARY_SAMPLES = 128


def _z(w) -> complex:
    return w if isinstance(w, complex) else as_modulus(w).z


class PsiOracle:
    """Memoized wrapper around a modulus-valued map with an evaluation ledger.

    ``ledger`` lists ``(w, psi(w))`` pairs in the order they were first
    computed; repeated queries hit the cache and are not counted.
    """

    def __init__(self, fn: Callable, workers: Optional[int] = None):
        self.fn = fn
        self.ledger: List[Tuple[complex, complex]] = []
        self._cache: Dict[Tuple[float, float], complex] = {}
        if workers is None:
            try:
                workers = max(1, int(os.environ.get("CONFIMM_THREADS", "1")))
            except ValueError:
                workers = 1
        self.workers = workers

    @property
    def evaluations(self) -> int:
        return len(self.ledger)

    def _key(self, z: complex):
        return (float(z.real), float(z.imag))

    def __call__(self, w) -> complex:
        z = _z(w)
        key = self._key(z)
        if key not in self._cache:
            out = _z(self.fn(Modulus.from_complex(z) if z.imag > 0 else z))
            self._cache[key] = out
            self.ledger.append((z, out))
        return self._cache[key]

    def many(self, ws: Sequence) -> List[complex]:
        zs = [_z(w) for w in ws]
        todo = []
        for z in zs:
            k = self._key(z)
            if k not in self._cache and k not in todo:
                todo.append(k)
        if self.workers > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                outs = list(pool.map(lambda k: _z(self.fn(Modulus(*k))), todo))
            for k, out in zip(todo, outs):
                self._cache[k] = out
                self.ledger.append((complex(*k), out))
        return [self(z) for z in zs]


@dataclass(frozen=True)
class WindingCertificate:
    samples: int
    degree: int
    min_gap: float


def _accumulated_winding(values: np.ndarray) -> float:
    ang = np.angle(values)
    steps = np.diff(np.append(ang, ang[0]))
    steps = (steps + np.pi) % (2 * np.pi) - np.pi
    return float(np.sum(steps)) / (2 * np.pi)


def winding_number(psi: PsiOracle, center, r: float, m: int = BOUNDARY_SAMPLES,
                   gap_tol: float = 1e-9) -> WindingCertificate:
    """Degree of ``p -> psi(p) - center`` on the circle of radius ``r``."""
    if m < 64:
        raise ValueError(f"need at least 64 boundary samples, got {m}")
    if r <= 0:
        raise ValueError("radius must be positive")
    return _loop_winding(psi, _z(center), _circle(_z(center), r, m), gap_tol)


def _circle(c: complex, r: float, m: int) -> List[complex]:
    return [c + r * complex(math.cos(2 * math.pi * k / m), math.sin(2 * math.pi * k / m)) for k in range(m)]


def _loop_winding(psi: PsiOracle, target: complex, loop: List[complex], gap_tol: float) -> WindingCertificate:
    vals = np.array(psi.many(loop)) - target
    gaps = np.abs(vals)
    if np.min(gaps) <= gap_tol:
        k = int(np.argmin(gaps))
        raise GapTooSmall(f"boundary point {loop[k]} maps within {gaps[k]:.2e} of the target")
    turns = _accumulated_winding(vals)
    return WindingCertificate(len(loop), int(round(turns)), float(np.min(gaps)))


def _box_loop(lo: complex, hi: complex, per_side: int) -> List[complex]:
    a, b, c, d = lo, complex(hi.real, lo.imag), hi, complex(lo.real, hi.imag)
    pts = []
    for p, q in ((a, b), (b, c), (c, d), (d, a)):
        pts += [p + (q - p) * k / per_side for k in range(per_side)]
    return pts


@dataclass
class SolveResult:
    w: complex
    residual: float
    evaluations: int
    history: List[float] = field(default_factory=list)


def brouwer_solve(
    psi: PsiOracle,
    tau0,
    r: float,
    tol: float = TOL,
    start=None,
    max_evals: int = 200,
    beta: float = 1.0,
    stall: int = 8,
    box_samples: int = 16,
) -> SolveResult:
    """Find ``w`` in the closed ball with ``|psi(w) - tau0| <= tol``.

    Damped iteration ``p <- p + beta (tau0 - psi(p))`` projected onto the ball;
    beta halves whenever the residual grows.  If the iteration stalls, boxes
    with nonzero boundary degree are subdivided and the iteration restarts from
    the center of the smallest certified box.
    """
    c = _z(tau0)
    p = c if start is None else _z(start)
    used0 = psi.evaluations
    history: List[float] = []

    def project(z):
        d = z - c
        return z if abs(d) <= r else c + d * (r / abs(d))

    def evaluate(z):
        if psi.evaluations - used0 >= max_evals:
            raise MaxEvaluations(f"evaluation budget {max_evals} exhausted")
        out = psi(z)
        if abs(out - z) > r * (1 + 1e-12):
            raise HypothesisViolated(f"|psi(p) - p| = {abs(out - z):.4f} > r = {r} at p = {z}")
        return out

    def iterate(p, beta, budget):
        best = (math.inf, p)
        res_prev = math.inf
        since_best = 0
        while since_best < budget:
            res = abs(evaluate(p) - c)
            history.append(res)
            if res < best[0]:
                best, since_best = (res, p), 0
            else:
                since_best += 1
            if res <= tol:
                return p, res
            if res > res_prev:
                beta *= 0.5
                p = best[1]
            res_prev = res
            p = project(p + beta * (c - psi(p)))
        return best[1], best[0]

    p, res = iterate(p, beta, stall)
    if res <= tol:
        return SolveResult(p, res, psi.evaluations - used0, history)

    # degree-guided subdivision
    lo, hi = complex(c.real - r, c.imag - r), complex(c.real + r, c.imag + r)
    boxes = [(lo, hi)]
    while boxes:
        lo, hi = boxes.pop(0)
        try:
            cert = _loop_winding(psi, c, _box_loop(lo, hi, box_samples), 1e-12)
        except GapTooSmall:
            cert = None
        if cert is not None and cert.degree == 0:
            continue
        mid = 0.5 * (lo + hi)
        p, res = iterate(project(mid), 1.0, stall)
        if res <= tol:
            return SolveResult(p, res, psi.evaluations - used0, history)
        if abs(hi - lo) < tol:
            continue
        boxes += [(lo, mid), (complex(mid.real, lo.imag), complex(hi.real, mid.imag)),
                  (complex(lo.real, mid.imag), complex(mid.real, hi.imag)), (mid, hi)]
    raise NoCertificate("no sub-box carries nonzero degree")


# --- continuation ---------------------------------------------------------------


@dataclass(frozen=True)
class PathNode:
    t: float
    w: complex
    residual: float


def browder_continuation(
    family: Callable,
    tau0,
    r: float,
    t_grid: Sequence[float],
    tol: float = TOL,
    step_cap: Optional[float] = None,
    dt_floor: float = 1e-4,
    max_evals: int = 200,
) -> List[PathNode]:
    """Track solutions of ``family(t, w) = tau0`` over ``t``.

    Each node warm-starts from the previous solution; a jump larger than
    ``step_cap`` splits the interval.  Splitting below ``dt_floor`` raises
    ComponentJumpSuspected carrying the accepted nodes.
    """
    c = _z(tau0)
    step_cap = r / 4 if step_cap is None else step_cap
    ts = sorted(float(t) for t in t_grid)
    oracles: Dict[float, PsiOracle] = {}

    def oracle(t):
        if t not in oracles:
            oracles[t] = PsiOracle(lambda w, t=t: family(t, w))
        return oracles[t]

    def solve(t, start):
        return brouwer_solve(oracle(t), c, r, tol, start=start, max_evals=max_evals)

    first = solve(ts[0], c)
    path = [PathNode(ts[0], first.w, first.residual)]
    pending = list(ts[1:])
    while pending:
        t = pending[0]
        prev = path[-1]
        sol = solve(t, prev.w)
        if abs(sol.w - prev.w) <= step_cap:
            path.append(PathNode(t, sol.w, sol.residual))
            pending.pop(0)
            continue
        if t - prev.t <= dt_floor:
            raise ComponentJumpSuspected(
                f"jump {abs(sol.w - prev.w):.4f} > {step_cap:.4f} between t = {prev.t:.6g} and {t:.6g}",
                partial_path=path,
            )
        pending.insert(0, 0.5 * (prev.t + t))
    return path
