"""Distribution updates.

The sampled update takes one ascent step on a single coordinate with an
importance-weighted gradient and re-projects in O(1) plus the cost of a
Fenwick update. The exact update uses the full gradient and a dense
projection.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ambiguity import Chi2Set, DistState, project, project_one_sparse
from .core import ConfigError, DomainError, DrfProblem

__all__ = ["BmdStepResult", "bmd_step", "ofo_p_step"]


@dataclass
class BmdStepResult:
    touched: int
    alpha: float
    value: float
    gradient: float


def bmd_step(problem: DrfProblem, i: int, state: DistState, x, step: float, rng) -> BmdStepResult:
    """One sampled ascent step for constraint ``i``.

    Draws ``r ~ p/sum(p)``, forms ``g_r = sum(p) F^i_r(x) / p_r`` (zero
    elsewhere), and projects ``p + step*g`` back onto the set.
    """
    if not step > 0:
        raise ConfigError(f"step size must be positive, got {step}")
    s = state.set
    r = state.index_for(rng.random())
    pr = state.value(r)
    if not pr > 0:
        raise DomainError(f"sampled coordinate {r} has non-positive mass {pr}")
    beta = state.sum1
    g = beta * problem.oracle.value(i, r, x) / pr
    alpha, v = project_one_sparse(s, beta, state.sum2, pr, pr + step * g)
    state.affine_update(alpha, r, v)
    return BmdStepResult(r, alpha, v, g)


def ofo_p_step(s: Chi2Set, problem: DrfProblem, i: int, p: np.ndarray, x, step: float) -> np.ndarray:
    """Projected ascent step ``P(p + step * F^i(x))``."""
    if not step > 0:
        raise ConfigError(f"step size must be positive, got {step}")
    return project(s, p + step * problem.oracle.values(i, x))
