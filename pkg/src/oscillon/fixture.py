"""Exactly solvable scalar contraction process used to validate the pullback
tooling: the flow ``x -> x e^{-(t-s)}`` of the linear decay problem.

Every attracting construct has a closed form here: clouds started in
``[-1, 1]`` collapse onto the origin at rate ``e^{-(t-s)}``, and the origin is
the unique bounded attracting trajectory, so pipeline code can be checked to
machine precision.
"""

from __future__ import annotations

import numpy as np

from .dynamics import _rk4_step


def exact_flow(x, s: float, t: float):
    """Closed-form solution ``x e^{-(t-s)}``."""
    return np.asarray(x, dtype=float) * np.exp(-(t - s))


def rk4_flow(x, s: float, t: float, dt: float = 1e-3):
    """The same flow by the production RK4 kernel (cross-check of the stepper)."""
    y = np.asarray(x, dtype=float).copy()
    rhs = lambda tc, yy: -yy
    nfull = int(np.floor((t - s) / dt + 1e-12))
    for i in range(nfull):
        y = _rk4_step(rhs, s + i * dt, y, dt)
    rem = (t - s) - nfull * dt
    if rem > 1e-9 * dt:
        y = _rk4_step(rhs, s + nfull * dt, y, rem)
    return y


def interval_cloud(s: float, n_points: int = 33, radius: float = 1.0) -> np.ndarray:
    """Uniform sample of the source interval ``[-radius, radius]`` at time s."""
    return np.linspace(-radius, radius, n_points)


def semidist_points(A, B) -> float:
    """Hausdorff semidistance between finite scalar point sets."""
    A = np.atleast_1d(np.asarray(A, dtype=float))
    B = np.atleast_1d(np.asarray(B, dtype=float))
    if A.size == 0:
        return 0.0
    if B.size == 0:
        raise ValueError("semidistance to an empty set is undefined")
    return float(np.abs(A[:, None] - B[None, :]).min(axis=1).max())


def pullback_semidistance(t: float, s: float, radius: float = 1.0,
                          n_points: int = 33) -> float:
    """Distance of the evolved interval cloud to the origin; equals
    ``radius * e^{-(t-s)}`` exactly."""
    cloud = exact_flow(interval_cloud(s, n_points, radius), s, t)
    return semidist_points(cloud, np.zeros(1))
