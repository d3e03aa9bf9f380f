"""Pure-Python reference kernels.

These mirror ``_ckernels.pyx`` function for function and are used whenever
the compiled extension is missing or ``DRF_PURE_PYTHON=1`` is set.
"""
from __future__ import annotations

import math

import numpy as np

__all__ = [
    "fenwick_build",
    "fenwick_add",
    "fenwick_prefix",
    "fenwick_search",
    "fenwick_search_many",
    "alpha_star",
]


def fenwick_build(values: np.ndarray) -> np.ndarray:
    """Return a 1-based Fenwick tree (length n + 1) over ``values``."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    n = values.shape[0]
    cs = np.concatenate(([0.0], np.cumsum(values)))
    idx = np.arange(1, n + 1)
    tree = np.empty(n + 1, dtype=np.float64)
    tree[0] = 0.0
    tree[1:] = cs[idx] - cs[idx - (idx & -idx)]
    return tree


def fenwick_add(tree: np.ndarray, i: int, delta: float) -> None:
    """Add ``delta`` to element ``i`` (0-based)."""
    n = tree.shape[0] - 1
    j = i + 1
    while j <= n:
        tree[j] += delta
        j += j & -j


def fenwick_prefix(tree: np.ndarray, k: int) -> float:
    """Sum of the first ``k`` elements."""
    s = 0.0
    j = k
    while j > 0:
        s += tree[j]
        j -= j & -j
    return s


def fenwick_search(tree: np.ndarray, target: float, a: float, b: float) -> int:
    """Smallest 0-based index r with a*S(r+1) + b*(r+1) > target.

    ``S`` is the prefix sum of the stored values, so ``a*S(k) + b*k`` is the
    prefix sum of the affinely mapped values. The result is clamped to n - 1.
    """
    n = tree.shape[0] - 1
    pos = 0
    acc = 0.0
    step = 1 << (n.bit_length() - 1) if n > 0 else 0
    while step:
        nxt = pos + step
        if nxt <= n:
            cand = acc + tree[nxt]
            if a * cand + b * nxt <= target:
                pos = nxt
                acc = cand
        step >>= 1
    return pos if pos < n else n - 1


def fenwick_search_many(tree, targets, a, b, out) -> None:
    for k in range(targets.shape[0]):
        out[k] = fenwick_search(tree, targets[k], a, b)


def _gprime(alpha, k, s1, s2, n, rho, delta):
    q = (1.0 - alpha) ** 2
    n2 = float(n) * n
    omd2 = (1.0 - delta) ** 2
    return (
        0.5 * s2
        - s1 / n
        + (q - omd2) * k / (2.0 * n2 * q)
        + (n * omd2 - 2.0 * rho) / (2.0 * n2 * q)
    )


def alpha_star(n, rho, delta, beta, gamma, p_old, w, tol_g, eps_alpha):
    """Optimal mixing weight for a projection after a one-coordinate change.

    ``beta`` and ``gamma`` are the sum and sum of squares of the current
    distribution, ``p_old`` its value at the touched coordinate and ``w``
    the new unprojected value there. Returns ``(alpha, iterations)``.
    """
    n = int(n)
    nf = float(n)
    n2 = nf * nf
    floor = delta / nf
    s1m = beta - p_old
    s2m = gamma - p_old * p_old
    s1 = s1m + w
    s2 = s2m + w * w
    a_full = 0.5 * s2 - s1 / nf + 1.0 / (2.0 * nf)
    a_minus = 0.5 * s2m - s1m / nf + (nf - 1.0) / (2.0 * n2)
    b_minus = rho / n2 - (1.0 - delta) ** 2 / (2.0 * n2)

    def full_closed(lo, hi):
        if a_full * n2 <= rho or a_full <= 0.0:
            return 0.0
        return min(max(1.0 - math.sqrt(rho / a_full) / nf, lo), hi)

    def minus_closed(lo, hi):
        if a_minus <= b_minus or a_minus <= 0.0:
            return 0.0
        return min(max(1.0 - math.sqrt(max(b_minus, 0.0) / a_minus), lo), hi)

    if w >= floor:
        return full_closed(0.0, 1.0), 0
    abar = (floor - w) / (1.0 / nf - w)
    lo, hi = 0.0, 1.0
    it = 0
    while True:
        if lo > abar:
            return full_closed(lo, hi), it
        if hi < abar:
            return minus_closed(lo, hi), it
        mid = 0.5 * (lo + hi)
        it += 1
        if mid >= abar:
            g = _gprime(mid, nf, s1, s2, nf, rho, delta)
        else:
            g = _gprime(mid, nf - 1.0, s1m, s2m, nf, rho, delta)
        if abs(g) <= tol_g or hi - lo <= eps_alpha:
            return mid, it
        if g > 0.0:
            lo = mid
        else:
            hi = mid
