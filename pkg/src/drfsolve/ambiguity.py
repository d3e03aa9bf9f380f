"""Chi-square ambiguity set, projections, linear maximisation and sampled state.

The set is ``{p >= delta/n : 0.5*||p - 1/n||^2 <= rho/n^2}``. Members are
unnormalised; their total mass lies within ``1 +/- sqrt(2*rho/n)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import ConfigError, DomainError

__all__ = [
    "Chi2Set",
    "contains",
    "project",
    "alpha_objective_derivative",
    "project_one_sparse",
    "sup_linear",
    "sup_dual_derivative",
    "DistState",
    "sample_index",
    "bmd_affine_update",
    "audit",
    "AuditReport",
]

TOL_G = 1e-10
EPS_ALPHA = 1e-12


@dataclass(frozen=True)
class Chi2Set:
    """Parameters of the ambiguity set for ``n`` samples."""

    n: int
    rho: float
    delta: float
    cg_override: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"n must be positive, got {self.n}")
        if not (0.0 <= self.delta < 1.0):
            raise ConfigError(f"delta must lie in [0, 1), got {self.delta}")
        if not (self.rho > 0.0):
            raise ConfigError(f"rho must be positive, got {self.rho}")
        if self.rho > self.n / 2.0:
            raise ConfigError(f"rho must not exceed n/2 = {self.n / 2}, got {self.rho}")

    @property
    def floor(self) -> float:
        return self.delta / self.n

    @property
    def radius_sq(self) -> float:
        """Right-hand side ``rho/n^2`` of the half squared distance bound."""
        return self.rho / (self.n * self.n)

    @property
    def C_g(self) -> float:
        """Upper bound on the total mass of a member."""
        if self.cg_override is not None:
            return float(self.cg_override)
        return 1.0 + math.sqrt(2.0 * self.rho / self.n)

    @property
    def D_p(self) -> float:
        return 4.0 * self.rho / (self.n * self.n)


def contains(s: Chi2Set, p, tol: float = 1e-9) -> bool:
    """Membership with absolute slack ``tol`` on every inequality."""
    p = np.asarray(p, dtype=float)
    if p.shape != (s.n,) or not np.all(np.isfinite(p)):
        return False
    if np.min(p) < s.floor - tol:
        return False
    dev = p - 1.0 / s.n
    return 0.5 * float(dev @ dev) <= s.radius_sq + tol


def _p_of_alpha(s: Chi2Set, w, alpha):
    return np.maximum(s.floor, (1.0 - alpha) * w + alpha / s.n)


def alpha_objective_derivative(s: Chi2Set, w, alpha: float) -> float:
    """Derivative of the mixing-weight dual objective for a dense ``w``.

    The optimal weight is the root of this non-increasing function (or 0
    if it is already non-positive at 0).
    """
    w = np.asarray(w, dtype=float)
    n = s.n
    n2 = float(n) * n
    inI = (1.0 - alpha) * w + alpha / n >= s.floor
    k = int(np.count_nonzero(inI))
    wi = w[inI]
    q = (1.0 - alpha) ** 2
    omd2 = (1.0 - s.delta) ** 2
    return float(0.5 * (wi @ wi) - wi.sum() / n + (q - omd2) * k / (2 * n2 * q)
                 + (n * omd2 - 2 * s.rho) / (2 * n2 * q))


def project(s: Chi2Set, w, tol_g: float = TOL_G, eps_alpha: float = EPS_ALPHA) -> np.ndarray:
    """Euclidean projection of ``w`` onto the set.

    The projection has the form ``max(delta/n, (1-a)w + a/n)``. Bisection on
    ``a`` narrows the search until the active floor set is fixed, after which
    the root is available in closed form.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (s.n,):
        raise ConfigError(f"expected a vector of length {s.n}, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise DomainError("cannot project a vector with non-finite entries")
    n = s.n
    scale = s.radius_sq
    if alpha_objective_derivative(s, w, 0.0) <= 0.0:
        return _p_of_alpha(s, w, 0.0)
    below = w < s.floor
    bars = np.sort((s.floor - w[below]) / (1.0 / n - w[below]))
    dev = w - 1.0 / n
    omd2 = (1.0 - s.delta) ** 2
    lo, hi = 0.0, 1.0
    while True:
        # breakpoints strictly inside (lo, hi)
        a = np.searchsorted(bars, lo, side="right")
        b = np.searchsorted(bars, hi, side="left")
        if a >= b:
            mid = 0.5 * (lo + hi)
            inI = (1.0 - mid) * w + mid / n >= s.floor
            di = dev[inI]
            A = 0.5 * float(di @ di)
            B = s.radius_sq - (n - di.shape[0]) * omd2 / (2.0 * n * n)
            if A <= 0.0 or B <= 0.0:
                alpha = hi if B <= 0.0 else lo
            else:
                alpha = min(max(1.0 - math.sqrt(B / A), lo), hi)
            return _p_of_alpha(s, w, alpha)
        mid = 0.5 * (lo + hi)
        g = alpha_objective_derivative(s, w, mid)
        if abs(g) <= tol_g * scale or hi - lo <= eps_alpha:
            return _p_of_alpha(s, w, mid)
        if g > 0:
            lo = mid
        else:
            hi = mid


def project_one_sparse(s: Chi2Set, beta: float, gamma: float, p_old: float, w_r: float,
                       tol_g: float = TOL_G, eps_alpha: float = EPS_ALPHA) -> tuple[float, float]:
    """Projection after changing one coordinate of a member ``p``.

    ``beta``/``gamma`` are ``sum(p)`` and ``sum(p**2)``, ``p_old`` the old
    value of the touched coordinate and ``w_r`` its new unprojected value.
    Returns ``(alpha, new_value)``: every other coordinate maps to
    ``(1-alpha)*p + alpha/n`` and the touched one becomes ``new_value``.
    """
    alpha, _ = _kernels.alpha_star(s.n, s.rho, s.delta, beta, gamma, p_old, w_r,
                                   tol_g * s.radius_sq, eps_alpha)
    value = max(s.floor, (1.0 - alpha) * w_r + alpha / s.n)
    return float(alpha), float(value)


def _sup_p(s: Chi2Set, F, lam):
    return np.maximum(s.floor, 1.0 / s.n + F / lam)


def sup_dual_derivative(s: Chi2Set, F, lam: float) -> float:
    """``rho/n^2 - 0.5*||p(lam) - 1/n||^2``; increasing in ``lam``, zero at the optimum."""
    dev = _sup_p(s, np.asarray(F, dtype=float), lam) - 1.0 / s.n
    return float(s.radius_sq - 0.5 * (dev @ dev))


def sup_linear(s: Chi2Set, F) -> tuple[float, np.ndarray]:
    """``max_{p in set} p . F`` and a maximiser."""
    F = np.asarray(F, dtype=float)
    if F.shape != (s.n,):
        raise ConfigError(f"expected a vector of length {s.n}, got shape {F.shape}")
    if not np.all(np.isfinite(F)):
        raise DomainError("sup_linear received non-finite values")
    n = s.n
    if np.all(F == F[0]):
        c = F[0]
        shift = math.sqrt(2.0 * s.rho / n) / n
        if c > 0:
            p = np.full(n, 1.0 / n + shift)
        elif c < 0:
            p = np.full(n, max(s.floor, 1.0 / n - shift))
        else:
            p = np.full(n, 1.0 / n)
        return float(p @ F), p
    if np.max(F) <= 0.0:
        # Limit lam -> 0: negative entries sit on the floor, zeros stay at 1/n.
        p0 = np.where(F < 0.0, s.floor, 1.0 / n)
        dev = p0 - 1.0 / n
        if 0.5 * float(dev @ dev) <= s.radius_sq:
            return float(p0 @ F), p0
    hi = max(float(np.max(np.abs(F))), 1e-300) * n
    while sup_dual_derivative(s, F, hi) < 0.0:
        hi *= 2.0
    lo = hi
    while sup_dual_derivative(s, F, lo) >= 0.0:
        lo *= 0.5
        if lo < 1e-300:
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if sup_dual_derivative(s, F, mid) >= 0.0:
            hi = mid
        else:
            lo = mid
    p = _sup_p(s, F, hi)
    return float(p @ F), p


@dataclass
class AuditReport:
    sum1_error: float
    sum2_error: float
    prefix_error: float

    @property
    def max_error(self) -> float:
        return max(self.sum1_error, self.sum2_error, self.prefix_error)


class DistState:
    """A member ``p`` stored as ``mult * stored + add`` with a prefix structure.

    The affine form makes the global mixing step O(1); only the touched
    coordinate changes in ``stored``. ``sampler`` selects a Fenwick tree
    (O(log n) per step) or an explicit cumulative array (O(n) per step,
    kept for cross-checking). A lazily accumulated weighted average of the
    iterates is maintained at O(1) cost per step.
    """

    RENORM_BELOW = 1e-3

    def __init__(self, s: Chi2Set, p=None, sampler: str = "fenwick"):
        if sampler not in ("fenwick", "cumulative"):
            raise ConfigError(f"unknown sampler {sampler!r}")
        self.set = s
        self.n = s.n
        self.sampler = sampler
        p = np.full(s.n, 1.0 / s.n) if p is None else np.array(p, dtype=float)
        if p.shape != (s.n,):
            raise ConfigError(f"expected a vector of length {s.n}, got shape {p.shape}")
        self._ramp = np.arange(1, s.n + 1, dtype=float) / s.n if sampler == "cumulative" else None
        self._load(p)
        self._avg_acc = np.zeros(s.n)
        self._avg_mark = np.zeros(s.n)
        self._A = 0.0
        self._B = 0.0
        self._W = 0.0
        self.rebuilds = 0

    def _load(self, p):
        self.stored = p.copy()
        self.mult = 1.0
        self.add = 0.0
        self.sum1 = float(p.sum())
        self.sum2 = float(p @ p)
        if self.sampler == "fenwick":
            self.tree = _kernels.fenwick_build(self.stored)
            self.stored_total = float(self.stored.sum())
        else:
            self.cum = np.cumsum(p)

    # values -----------------------------------------------------------
    def value(self, r: int) -> float:
        return self.mult * self.stored[r] + self.add

    def values_at(self, idx) -> np.ndarray:
        return self.mult * self.stored[idx] + self.add

    def materialize(self) -> np.ndarray:
        return self.mult * self.stored + self.add

    @property
    def total(self) -> float:
        if self.sampler == "fenwick":
            return self.mult * self.stored_total + self.add * self.n
        return float(self.cum[-1])

    def prefix(self, k: int) -> float:
        """Sum of the first ``k`` entries of ``p``."""
        if k <= 0:
            return 0.0
        if self.sampler == "fenwick":
            return self.mult * _kernels.fenwick_prefix(self.tree, k) + self.add * k
        return float(self.cum[k - 1])

    # sampling ---------------------------------------------------------
    def index_for(self, u: float) -> int:
        """Index whose cumulative interval contains ``u * total``."""
        target = u * self.total
        if self.sampler == "fenwick":
            return int(_kernels.fenwick_search(self.tree, target, self.mult, self.add))
        return int(min(np.searchsorted(self.cum, target, side="right"), self.n - 1))

    def indices_for(self, us) -> np.ndarray:
        us = np.ascontiguousarray(us, dtype=float)
        targets = us * self.total
        if self.sampler == "fenwick":
            out = np.empty(us.shape[0], dtype=np.int64)
            _kernels.fenwick_search_many(self.tree, targets, self.mult, self.add, out)
            return out
        return np.minimum(np.searchsorted(self.cum, targets, side="right"), self.n - 1)

    # updates ----------------------------------------------------------
    def affine_update(self, alpha: float, touched: int, touched_value: float) -> None:
        """``p <- (1-alpha) p + alpha/n`` everywhere, then ``p[touched] <- touched_value``."""
        if not (0.0 <= alpha < 1.0) or not math.isfinite(alpha):
            raise DomainError(f"mixing weight must lie in [0, 1), got {alpha}")
        n = self.n
        k = 1.0 - alpha
        p_old = self.value(touched)
        rest1 = self.sum1 - p_old
        rest2 = self.sum2 - p_old * p_old
        v = float(touched_value)
        self.sum1 = k * rest1 + alpha * (n - 1) / n + v
        self.sum2 = (k * k * rest2 + 2.0 * alpha * k * rest1 / n
                     + (n - 1) * alpha * alpha / (n * n) + v * v)
        # flush the lazy average of the touched coordinate before it changes
        self._avg_acc[touched] += self.stored[touched] * (self._A - self._avg_mark[touched])
        self._avg_mark[touched] = self._A
        self.mult *= k
        self.add = k * self.add + alpha / n
        new_s = (v - self.add) / self.mult
        if self.sampler == "fenwick":
            delta = new_s - self.stored[touched]
            _kernels.fenwick_add(self.tree, touched, delta)
            self.stored_total += delta
        else:
            mixed_old = k * p_old + alpha / n
            self.cum *= k
            self.cum += alpha * self._ramp
            self.cum[touched:] += v - mixed_old
        self.stored[touched] = new_s
        if self.mult < self.RENORM_BELOW:
            self.rebuild()

    def rebuild(self) -> None:
        """Fold the affine map into ``stored`` and recompute all caches."""
        self._avg_acc += self.stored * (self._A - self._avg_mark)
        self._avg_mark[:] = self._A
        self._load(self.materialize())
        self.rebuilds += 1

    # lazy averaging ---------------------------------------------------
    def accumulate(self, theta: float) -> None:
        """Add ``theta * p`` (the current iterate) to the running average."""
        self._A += theta * self.mult
        self._B += theta * self.add
        self._W += theta

    @property
    def average_weight(self) -> float:
        return self._W

    def average(self) -> np.ndarray:
        if self._W <= 0:
            raise ConfigError("no iterates have been accumulated yet")
        tot = self._avg_acc + self.stored * (self._A - self._avg_mark) + self._B
        return tot / self._W


def sample_index(state: DistState, rng) -> int:
    """Draw ``r`` with probability ``p_r / sum(p)``."""
    return state.index_for(rng.random())


def bmd_affine_update(state: DistState, alpha_star: float, touched: int,
                      touched_value: float) -> DistState:
    state.affine_update(alpha_star, touched, touched_value)
    return state


def audit(state: DistState) -> AuditReport:
    """Compare cached sums and prefix values with an O(n) recomputation."""
    p = state.materialize()
    s1 = abs(state.sum1 - float(p.sum()))
    s2 = abs(state.sum2 - float(p @ p))
    exact = np.cumsum(p)
    if state.sampler == "fenwick":
        # the tree's implicit prefix sums, recovered in O(n)
        n = state.n
        idx = np.arange(1, n + 1)
        running = np.zeros(n + 1)
        for j in range(1, n + 1):
            running[j] = state.tree[j] + running[j - (j & -j)]
        tree_prefix = state.mult * running[1:] + state.add * idx
        pe = float(np.max(np.abs(tree_prefix - exact)))
    else:
        pe = float(np.max(np.abs(state.cum - exact)))
    return AuditReport(s1, s2, pe)
