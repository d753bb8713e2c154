"""Closed-form test surfaces."""

import numpy as np

from .geometry import GridTorusMap, grid


def torus_of_revolution(n: int, R: float = 2.0, r: float = 1.0) -> GridTorusMap:
    """Standard torus, angles ``2*pi*u`` around the axis and ``2*pi*v`` around the tube."""
    u, v = grid(n)
    rho = R + r * np.cos(2 * np.pi * v)
    return GridTorusMap(
        np.stack(
            [rho * np.cos(2 * np.pi * u), rho * np.sin(2 * np.pi * u), r * np.sin(2 * np.pi * v)],
            axis=-1,
        )
    )


def conformal_tube_angle(y, R: float = 2.0, r: float = 1.0):
    """Tube angle ``phi`` at conformal height ``y`` (period ``r / sqrt(R^2 - r^2)``).

    Inverts ``y = int_0^phi r / (R + r cos t) dt / (2 pi)`` in closed form.
    """
    c = np.sqrt(R * R - r * r)
    period = r / c
    # y / period in [0, 1) maps to phi in [0, 2 pi); branch-safe via arctan2
    theta = 2 * np.pi * np.asarray(y) / period
    half = np.arctan2(np.sqrt((R + r) / (R - r)) * np.sin(theta / 2),
                      np.cos(theta / 2))
    return 2 * half


def conformal_torus_of_revolution(n: int, R: float = 2.0, r: float = 1.0) -> GridTorusMap:
    """Torus of revolution reparametrized so that ``f*h`` is conformal to ``g_tau``,
    ``tau = i r / sqrt(R^2 - r^2)``.

    The tube angle is taken as a function of the conformal coordinate, so
    ``f*h = lambda * (du^2 + |tau|^2 dv^2)``.
    """
    u, v = grid(n)
    period = r / np.sqrt(R * R - r * r)
    phi = conformal_tube_angle(v * period, R, r)
    rho = R + r * np.cos(phi)
    return GridTorusMap(
        np.stack(
            [rho * np.cos(2 * np.pi * u), rho * np.sin(2 * np.pi * u), r * np.sin(phi)],
            axis=-1,
        )
    )


def pinched_map(n: int) -> GridTorusMap:
    """Periodic map whose u-derivative vanishes on the lines u = 1/4, 3/4."""
    if n % 4:
        raise ValueError("pinched fixture needs n divisible by 4")
    u, v = grid(n)
    return GridTorusMap(
        np.stack(
            [np.sin(2 * np.pi * u), np.sin(2 * np.pi * v), np.cos(2 * np.pi * v)], axis=-1
        )
    )
