"""Decision domains with their distance-generating functions.

Each domain exposes the prox step ``argmin_y <g, y> + B(y, x)/step`` for its
geometry, the bound ``diameter`` on the Bregman divergence from the centre,
and the primal/dual norms used for Lipschitz constants.
"""
from __future__ import annotations

import math

import numpy as np

from .core import DomainError

__all__ = [
    "Domain",
    "EuclideanBall",
    "EntropySimplex",
    "ProductOfSimplices",
    "BudgetBox",
    "project_capped_simplex",
]

_TINY = 1e-300


class Domain:
    dim: int
    diameter: float

    def center(self) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x, tol: float = 1e-9) -> bool:
        raise NotImplementedError

    def project(self, x) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng) -> np.ndarray:
        raise NotImplementedError

    def norm(self, v) -> float:
        return float(np.linalg.norm(v))

    def dual_norm(self, g) -> float:
        return float(np.linalg.norm(g))

    def bregman(self, y, x) -> float:
        """``B(y, x) = psi(y) - psi(x) - <grad psi(x), y - x>``."""
        diff = np.asarray(y) - np.asarray(x)
        return 0.5 * float(diff @ diff)

    def _check(self, x, g, step):
        x = np.asarray(x, dtype=float)
        g = np.asarray(g, dtype=float)
        if x.shape != (self.dim,) or g.shape != (self.dim,):
            raise DomainError(f"expected vectors of length {self.dim}")
        if not (np.all(np.isfinite(g)) and math.isfinite(step) and step >= 0):
            raise DomainError("prox step received a non-finite gradient or step size")
        if not self.contains(x, 1e-9):
            raise DomainError("prox step called at a point outside the domain")
        return x, g

    def prox_step(self, x, g, step) -> np.ndarray:
        x, g = self._check(x, g, step)
        return self.project(x - step * g)


class EuclideanBall(Domain):
    """``{x : ||x||_2 <= radius}`` with ``psi = 0.5*||x||^2``."""

    def __init__(self, dim: int, radius: float):
        if dim < 1 or not radius > 0:
            raise DomainError("ball needs dim >= 1 and a positive radius")
        self.dim = int(dim)
        self.radius = float(radius)
        self.diameter = 2.0 * self.radius ** 2

    def center(self):
        return np.zeros(self.dim)

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        return x.shape == (self.dim,) and bool(np.all(np.isfinite(x))) and \
            float(np.linalg.norm(x)) <= self.radius + tol

    def project(self, x):
        x = np.asarray(x, dtype=float)
        nrm = float(np.linalg.norm(x))
        return x * (self.radius / nrm) if nrm > self.radius else x.copy()

    def sample(self, rng):
        v = rng.standard_normal(self.dim)
        v /= np.linalg.norm(v)
        return v * self.radius * rng.random() ** (1.0 / self.dim)


def _entropy_step(x, g, step):
    logx = np.log(np.maximum(x, _TINY)) - step * g
    logx -= logx.max(axis=-1, keepdims=True)
    y = np.maximum(np.exp(logx), _TINY)
    return y / y.sum(axis=-1, keepdims=True)


def _kl(y, x):
    y = np.asarray(y, dtype=float)
    x = np.maximum(np.asarray(x, dtype=float), _TINY)
    mask = y > 0
    return float(np.sum(y[mask] * np.log(y[mask] / x[mask])) - y.sum() + x.sum())


class EntropySimplex(Domain):
    """Probability simplex with negative entropy; prox is multiplicative weights."""

    def __init__(self, dim: int):
        if dim < 1:
            raise DomainError("simplex needs dim >= 1")
        self.dim = int(dim)
        self.diameter = math.log(dim) if dim > 1 else 0.0

    def center(self):
        return np.full(self.dim, 1.0 / self.dim)

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        return (x.shape == (self.dim,) and bool(np.all(np.isfinite(x)))
                and float(x.min()) >= -tol and abs(float(x.sum()) - 1.0) <= tol)

    def project(self, x):
        return project_capped_simplex(np.asarray(x, dtype=float), 1.0, equality=True)

    def sample(self, rng):
        return rng.dirichlet(np.ones(self.dim))

    def norm(self, v):
        return float(np.abs(v).sum())

    def dual_norm(self, g):
        return float(np.abs(g).max())

    def bregman(self, y, x):
        return _kl(y, x)

    def prox_step(self, x, g, step):
        x, g = self._check(x, g, step)
        return _entropy_step(x, g, step)


class ProductOfSimplices(Domain):
    """``J`` simplices of size ``L`` stacked block-wise into one vector."""

    def __init__(self, J: int, L: int):
        if J < 1 or L < 1:
            raise DomainError("product of simplices needs J, L >= 1")
        self.J, self.L = int(J), int(L)
        self.dim = self.J * self.L
        self.diameter = self.J * math.log(self.L) if self.L > 1 else 0.0

    def center(self):
        return np.full(self.dim, 1.0 / self.L)

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,) or not np.all(np.isfinite(x)):
            return False
        b = x.reshape(self.J, self.L)
        return float(b.min()) >= -tol and float(np.max(np.abs(b.sum(axis=1) - 1.0))) <= tol

    def project(self, x):
        b = np.asarray(x, dtype=float).reshape(self.J, self.L)
        return np.concatenate([project_capped_simplex(row, 1.0, equality=True) for row in b])

    def sample(self, rng):
        return rng.dirichlet(np.ones(self.L), size=self.J).reshape(-1)

    def norm(self, v):
        return float(np.sqrt(np.sum(np.abs(np.reshape(v, (self.J, self.L))).sum(axis=1) ** 2)))

    def dual_norm(self, g):
        return float(np.sqrt(np.sum(np.abs(np.reshape(g, (self.J, self.L))).max(axis=1) ** 2)))

    def bregman(self, y, x):
        return _kl(y, x)

    def prox_step(self, x, g, step):
        x, g = self._check(x, g, step)
        y = _entropy_step(x.reshape(self.J, self.L), g.reshape(self.J, self.L), step)
        return y.reshape(-1)


class BudgetBox(Domain):
    """``{x >= 0, sum(x) <= budget} x [tau_lo, tau_hi]`` with Euclidean geometry.

    The last coordinate is the auxiliary scalar ``tau``.
    """

    def __init__(self, d: int, budget: float, tau_lo: float, tau_hi: float):
        if d < 1 or not budget > 0 or not tau_hi >= tau_lo:
            raise DomainError("budget box needs d >= 1, budget > 0 and tau_lo <= tau_hi")
        self.d = int(d)
        self.dim = self.d + 1
        self.budget = float(budget)
        self.tau_lo, self.tau_hi = float(tau_lo), float(tau_hi)
        self.diameter = self.budget ** 2 + 0.5 * (self.tau_hi - self.tau_lo) ** 2

    def center(self):
        x = np.full(self.dim, self.budget / (2.0 * self.d))
        x[-1] = 0.5 * (self.tau_lo + self.tau_hi)
        return x

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,) or not np.all(np.isfinite(x)):
            return False
        q = x[:-1]
        return (float(q.min()) >= -tol and float(q.sum()) <= self.budget + tol
                and self.tau_lo - tol <= x[-1] <= self.tau_hi + tol)

    def project(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty(self.dim)
        out[:-1] = project_capped_simplex(x[:-1], self.budget, equality=False)
        out[-1] = min(max(x[-1], self.tau_lo), self.tau_hi)
        return out

    def sample(self, rng):
        q = rng.dirichlet(np.ones(self.d + 1))[: self.d] * self.budget
        return np.append(q, rng.uniform(self.tau_lo, self.tau_hi))


def project_capped_simplex(v, total: float, equality: bool) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum x = total}`` (or ``<=``)."""
    v = np.asarray(v, dtype=float)
    if not equality:
        c = np.maximum(v, 0.0)
        if c.sum() <= total:
            return c
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    ks = np.arange(1, v.shape[0] + 1)
    k = ks[u - css / ks > 0][-1]
    return np.maximum(v - css[k - 1] / k, 0.0)
