"""Decision-variable updates.

The sampled update estimates which constraint is currently largest from K
draws per constraint, then takes a mirror step along one sampled
subgradient of that constraint. The exact update uses full sums.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ambiguity import DistState
from .core import ConfigError, DrfProblem

__all__ = ["MaxEstimate", "approx_max_index", "sofo_x_step", "ofo_x_step", "exact_max_index"]


@dataclass
class MaxEstimate:
    index: int
    f_hat: np.ndarray


def _check_step(step):
    if not step > 0:
        raise ConfigError(f"step size must be positive, got {step}")


def _stream(rngs, i):
    return rngs[i] if isinstance(rngs, (list, tuple)) else rngs


def approx_max_index(problem: DrfProblem, states: Sequence[DistState], x, K: int,
                     rngs) -> MaxEstimate:
    """Estimate ``argmax_i p^i . F^i(x)`` from ``K`` draws per constraint.

    ``f_hat[i] = sum(p^i) * mean_k F^i_{r_k}(x)`` with ``r_k ~ p^i/sum(p^i)``,
    which is unbiased for ``p^i . F^i(x)``. Ties go to the lowest index.
    When ``K >= n`` the sum is evaluated exactly instead of sampled.
    """
    if K < 1:
        raise ConfigError(f"K must be at least 1, got {K}")
    f_hat = np.empty(problem.m)
    for i in range(problem.m):
        st = states[i]
        if K >= problem.n:
            f_hat[i] = float(st.materialize() @ problem.oracle.values(i, x))
            continue
        idx = st.indices_for(_stream(rngs, i).random(K))
        f_hat[i] = st.total * float(problem.oracle.values_at(i, idx, x).sum()) / K
    return MaxEstimate(int(np.argmax(f_hat)), f_hat)


def sofo_x_step(problem: DrfProblem, states: Sequence[DistState], x, step: float,
                est: MaxEstimate, rng) -> np.ndarray:
    """Mirror step along ``sum(p^i) * dF^i_r(x)`` with ``r ~ p^i``, ``i = est.index``."""
    _check_step(step)
    i = est.index
    st = states[i]
    r = st.index_for(rng.random())
    g = st.total * problem.oracle.subgradient(i, r, x)
    return problem.domain.prox_step(x, g, step)


def exact_max_index(problem: DrfProblem, ps: Sequence[np.ndarray], x) -> tuple[int, np.ndarray]:
    vals = np.array([float(ps[i] @ problem.oracle.values(i, x)) for i in range(problem.m)])
    return int(np.argmax(vals)), vals


def ofo_x_step(problem: DrfProblem, ps: Sequence[np.ndarray], x, step: float) -> np.ndarray:
    """Mirror step along the exact subgradient of ``max_i p^i . F^i``."""
    _check_step(step)
    i, _ = exact_max_index(problem, ps, x)
    g = problem.oracle.weighted_subgradient(i, ps[i], x)
    return problem.domain.prox_step(x, g, step)
