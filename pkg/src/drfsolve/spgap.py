"""Saddle-point gap of a candidate pair ``(x_bar, p_bar)``.

``gap = sup_p phi(x_bar, p) - inf_x phi(x, p_bar)``. The sup decouples per
constraint into linear maximisations over the ambiguity set and is solved
exactly. The inf is a convex minimisation solved approximately by a
subgradient method with a fixed iteration budget, so the reported lower
value can sit above the true infimum and the gap is then an underestimate.
Early stops based on it are a heuristic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ambiguity import Chi2Set, sup_linear
from .core import DrfProblem, phi

__all__ = ["GapReport", "sup_over_p", "inf_over_x", "sp_gap"]


@dataclass
class GapReport:
    sup_value: float
    sup_argmax_constraint: int
    inf_value: float
    gap: float
    inf_iterations_used: int
    phi_at_pair: float
    p_star: list[np.ndarray]
    x_inner: np.ndarray


def sup_over_p(problem: DrfProblem, s: Chi2Set, x_bar) -> tuple[float, int, list[np.ndarray]]:
    """``sup_p phi(x_bar, p)`` with the maximising constraint and distributions."""
    vals = np.empty(problem.m)
    ps = []
    for i in range(problem.m):
        vals[i], p = sup_linear(s, problem.oracle.values(i, x_bar))
        ps.append(p)
    k = int(np.argmax(vals))
    return float(vals[k]), k, ps


def inf_over_x(problem: DrfProblem, p_bar: Sequence[np.ndarray], budget: int,
               x_init=None) -> tuple[float, np.ndarray]:
    """Approximate ``min_x max_i p_bar^i . F^i(x)`` with ``budget`` subgradient steps.

    Uses mirror steps of size ``c/sqrt(k)`` in the domain geometry. The
    returned value is the best among all iterates and the running average
    at powers of two, so it never increases with the budget.
    """
    dom = problem.domain
    fns = [problem.oracle.weighted(i, p_bar[i]) for i in range(problem.m)]

    def evaluate(x):
        best_v, best_g = -math.inf, None
        for fn in fns:
            v, g = fn(x)
            if v > best_v:
                best_v, best_g = v, g
        return best_v, best_g

    x = dom.center() if x_init is None else dom.project(np.asarray(x_init, dtype=float))
    lip = problem.lipschitz_G * max(float(np.sum(p)) for p in p_bar)
    best_v, g = evaluate(x)
    best_x = x.copy()
    if lip <= 0 or budget <= 0 or dom.diameter <= 0:
        return float(best_v), best_x
    c = math.sqrt(2.0 * dom.diameter) / lip
    avg = x.copy()
    for k in range(1, int(budget) + 1):
        x = dom.prox_step(x, g, c / math.sqrt(k))
        avg += (x - avg) / (k + 1)
        v, g = evaluate(x)
        if v < best_v:
            best_v, best_x = v, x.copy()
        if k & (k - 1) == 0:
            va, _ = evaluate(avg)
            if va < best_v:
                best_v, best_x = va, avg.copy()
    return float(best_v), best_x


def sp_gap(problem: DrfProblem, s: Chi2Set, x_bar, p_bar: Sequence[np.ndarray],
           budget: int = 2000, x_init=None) -> GapReport:
    """Gap of ``(x_bar, p_bar)``; the inner solve starts from ``x_bar`` by default."""
    upper, k, ps = sup_over_p(problem, s, x_bar)
    lower, x_inner = inf_over_x(problem, p_bar, budget, x_bar if x_init is None else x_init)
    return GapReport(upper, k, lower, upper - lower, int(budget),
                     phi(problem, x_bar, p_bar), ps, x_inner)
