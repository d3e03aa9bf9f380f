"""Independent reference computations used by the tests.

Nothing here imports the package. Every oracle works in the rescaled
variable ``z = n * p`` so that the constraints are O(1):
``z >= delta`` and ``0.5 * ||z - 1||^2 <= rho``.
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import minimize, minimize_scalar


def _cons(n, rho, delta):
    return [
        {"type": "ineq", "fun": lambda z: z - delta, "jac": lambda z: np.eye(n)},
        {"type": "ineq", "fun": lambda z: rho - 0.5 * np.sum((z - 1.0) ** 2),
         "jac": lambda z: -(z - 1.0)[None, :]},
    ]


def member(n, rho, delta, p, tol=1e-9):
    p = np.asarray(p, dtype=float)
    return bool(np.min(p) >= delta / n - tol and 0.5 * np.sum((p - 1.0 / n) ** 2) <= rho / n**2 + tol)


def projection_oracle(n, rho, delta, w):
    """Closest member to ``w`` by generic constrained minimisation."""
    target = n * np.asarray(w, dtype=float)
    z0 = np.full(n, 1.0)
    res = minimize(lambda z: 0.5 * np.sum((z - target) ** 2), z0,
                   jac=lambda z: z - target, constraints=_cons(n, rho, delta),
                   method="SLSQP", options={"ftol": 1e-16, "maxiter": 1000})
    return res.x / n


def sup_oracle(n, rho, delta, F):
    """``max p . F`` over the set by generic constrained maximisation."""
    F = np.asarray(F, dtype=float)
    best = -np.inf
    for z0 in (np.full(n, 1.0), np.maximum(delta, 1.0 + 0.5 * np.sign(F) * np.sqrt(2 * rho / n))):
        res = minimize(lambda z: -F @ z / n, z0, jac=lambda z: -F / n,
                       constraints=_cons(n, rho, delta), method="SLSQP",
                       options={"ftol": 1e-16, "maxiter": 1000})
        z = res.x
        if member(n, rho, delta, z / n, 1e-10):
            best = max(best, float(F @ z / n))
    return best


def sup_grid_2d(rho, delta, F, points=200_001):
    """Grid maximisation for ``n = 2`` over the extreme points of the set.

    These are the feasible points of the boundary circle (gridded by angle),
    the circle's intersections with the floor lines, and the floor corner.
    """
    F = np.asarray(F, dtype=float)
    r = np.sqrt(2 * rho)
    th = np.linspace(0.0, 2 * np.pi, points)
    cand = [np.stack([1 + r * np.cos(th), 1 + r * np.sin(th)], axis=1), np.array([[delta, delta]])]
    h = r * r - (delta - 1.0) ** 2
    if h >= 0:
        for s in (-1.0, 1.0):
            other = 1.0 + s * np.sqrt(h)
            cand.append(np.array([[delta, other], [other, delta]]))
    Z = np.concatenate(cand)
    ok = (Z.min(axis=1) >= delta - 1e-12) & (0.5 * np.sum((Z - 1.0) ** 2, axis=1) <= rho + 1e-12)
    return float(np.max(Z[ok] @ F) / 2.0)


def _dual(n, rho, delta, F, lam):
    lam = np.atleast_1d(lam)
    Z = np.maximum(delta, 1.0 + F[:, None] / (n * lam[None, :]))
    return lam * rho + (F @ Z) / n - 0.5 * lam * np.sum((Z - 1.0) ** 2, axis=0)


def sup_dual_grid(n, rho, delta, F, points=4001):
    """``max p . F`` as the minimum of the Lagrangian dual over ``lambda >= 0``.

    The dual function is evaluated on a log-spaced grid of multipliers and
    the best cell is refined by a bounded scalar search. ``lambda = 0`` is
    included when it gives a finite value (all ``F <= 0``).
    """
    F = np.asarray(F, dtype=float)
    scale = float(np.max(np.abs(F)))
    if scale == 0.0:
        return 0.0
    Fs = F / scale
    logs = np.linspace(-14.0, 10.0, points)
    vals = _dual(n, rho, delta, Fs, 10.0 ** logs)
    k = int(np.argmin(vals))
    lo, hi = logs[max(k - 1, 0)], logs[min(k + 1, points - 1)]
    res = minimize_scalar(lambda t: float(_dual(n, rho, delta, Fs, 10.0 ** t)[0]),
                          bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    best = min(float(vals[k]), float(res.fun))
    if np.all(Fs <= 0):
        best = min(best, float(delta * Fs.sum() / n))
    return best * scale


def weighted_subgradient(A, p):
    """``sum_r p_r a_r`` for linear constraints ``F_r(x) = a_r . x + b_r``."""
    return np.asarray(p, dtype=float) @ np.asarray(A, dtype=float)
