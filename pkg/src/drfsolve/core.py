"""Problem description, oracle interface, certificates and running averages."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DrfError",
    "ConfigError",
    "DomainError",
    "BoundsError",
    "ConstraintOracle",
    "DrfProblem",
    "CertificateKind",
    "CertificateSource",
    "Certificate",
    "RunningAverage",
    "phi",
    "constraint_values",
    "update_average",
    "validate_problem",
    "UniformStream",
    "spawn_streams",
]


class DrfError(ValueError):
    """Base class for user-facing errors raised by the solver."""


class ConfigError(DrfError):
    """Invalid configuration value."""


class DomainError(DrfError):
    """A point lies outside the set it is required to belong to."""


class BoundsError(DrfError):
    """Declared Lipschitz or magnitude bounds are contradicted by evaluation."""


class ConstraintOracle:
    """Access to ``F^i_r(x)`` and its subgradients.

    Subclasses must implement :meth:`value` and :meth:`subgradient`. The
    batched methods have loop-based defaults and should be overridden when a
    vectorised form is available. ``m``, ``n`` and ``d`` are filled in by
    :class:`DrfProblem` when a subclass does not set them.
    """

    m: int
    n: int
    d: int

    def value(self, i: int, r: int, x: np.ndarray) -> float:
        raise NotImplementedError

    def subgradient(self, i: int, r: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def values(self, i: int, x: np.ndarray) -> np.ndarray:
        """All n values of constraint ``i`` at ``x``."""
        return np.array([self.value(i, r, x) for r in range(self.n)])

    def values_at(self, i: int, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Values of constraint ``i`` at ``x`` for the sample indices ``idx``."""
        return np.array([self.value(i, int(r), x) for r in idx])

    def weighted_subgradient(self, i: int, w: np.ndarray, x: np.ndarray) -> np.ndarray:
        """``sum_r w_r * subgradient(i, r, x)``."""
        g = np.zeros(self.d)
        for r in np.flatnonzero(w):
            g += w[r] * self.subgradient(i, int(r), x)
        return g

    def weighted(self, i: int, w: np.ndarray) -> Callable[[np.ndarray], tuple[float, np.ndarray]]:
        """Return ``x -> (w @ F^i(x), sum_r w_r dF^i_r(x))``.

        Linear oracles override this to precompute the aggregate once.
        """
        w = np.asarray(w, dtype=float)

        def fn(x):
            return float(w @ self.values(i, x)), self.weighted_subgradient(i, w, x)

        return fn


@dataclass
class DrfProblem:
    """A feasibility instance.

    ``lipschitz_G`` bounds the dual norm of every subgradient and
    ``bounds_M[i]`` bounds ``|F^i_r(x)|`` over the domain.
    """

    oracle: ConstraintOracle
    m: int
    n: int
    d: int
    lipschitz_G: float
    bounds_M: np.ndarray
    domain: object
    x0: np.ndarray | None = None
    name: str = "problem"

    def __post_init__(self):
        self.bounds_M = np.asarray(self.bounds_M, dtype=float).reshape(-1)
        if self.m < 1 or self.n < 2 or self.d < 1:
            raise ConfigError(f"need m >= 1, n >= 2, d >= 1 (got m={self.m}, n={self.n}, d={self.d})")
        if self.bounds_M.shape[0] != self.m:
            raise ConfigError(f"bounds_M must have length m={self.m}, got {self.bounds_M.shape[0]}")
        if self.lipschitz_G < 0 or np.any(self.bounds_M < 0):
            raise ConfigError("lipschitz_G and bounds_M must be non-negative")
        for key in ("m", "n", "d"):
            # loop-based oracle defaults need the sizes
            if not hasattr(self.oracle, key):
                setattr(self.oracle, key, getattr(self, key))
        if getattr(self.domain, "dim", self.d) != self.d:
            raise ConfigError(f"domain dimension {self.domain.dim} does not match d={self.d}")
        if self.x0 is not None:
            self.x0 = np.asarray(self.x0, dtype=float)
            if not self.domain.contains(self.x0, 1e-9):
                raise DomainError("initial point x0 lies outside the domain")

    def initial_point(self) -> np.ndarray:
        if self.x0 is not None:
            return self.x0.copy()
        return self.domain.center()


class CertificateKind(enum.Enum):
    EPS_FEASIBLE = "eps-feasible"
    INFEASIBLE = "infeasible"


class CertificateSource(enum.Enum):
    EARLY_STOP_SP_GAP = "early-stop-sp-gap"
    EXACT_TEST = "exact-test"
    EFFICIENT_TEST = "efficient-test"


@dataclass
class Certificate:
    """Outcome of a feasibility run.

    For ``EPS_FEASIBLE`` the witness is ``x_bar``; for ``INFEASIBLE`` it is
    the list ``p_bar`` of ambiguity-set members.
    """

    kind: CertificateKind
    source: CertificateSource
    epsilon: float
    x_bar: np.ndarray
    p_bar: list[np.ndarray]
    statistic: float
    threshold: float

    @property
    def feasible(self) -> bool:
        return self.kind is CertificateKind.EPS_FEASIBLE


@dataclass
class RunningAverage:
    """Weighted average of iterates, updated incrementally.

    ``avg_p`` may be empty when the distribution averages are kept elsewhere
    (the sampled solver keeps them lazily inside each distribution state).
    """

    weight_sum: float = 0.0
    avg_x: np.ndarray | None = None
    avg_p: list[np.ndarray] = field(default_factory=list)

    def add(self, theta: float, x: np.ndarray, ps: Sequence[np.ndarray] = ()) -> None:
        update_average(self, theta, x, ps)


def update_average(avg: RunningAverage, theta: float, x: np.ndarray,
                   ps: Sequence[np.ndarray] = ()) -> RunningAverage:
    """Fold ``(x, ps)`` into ``avg`` with weight ``theta`` (in place)."""
    if not theta > 0 or not math.isfinite(theta):
        raise ConfigError(f"averaging weight must be positive and finite, got {theta}")
    new_sum = avg.weight_sum + theta
    frac = theta / new_sum
    if avg.avg_x is None:
        avg.avg_x = np.array(x, dtype=float, copy=True)
    else:
        avg.avg_x += frac * (np.asarray(x) - avg.avg_x)
    if len(ps):
        if not avg.avg_p:
            avg.avg_p = [np.array(p, dtype=float, copy=True) for p in ps]
        else:
            for a, p in zip(avg.avg_p, ps):
                a += frac * (np.asarray(p) - a)
    avg.weight_sum = new_sum
    return avg


def constraint_values(problem: DrfProblem, x: np.ndarray, ps: Sequence[np.ndarray]) -> np.ndarray:
    """``[p^i . F^i(x)]_i``."""
    out = np.empty(problem.m)
    for i in range(problem.m):
        F = problem.oracle.values(i, x)
        if np.shape(F) != (problem.n,) or np.shape(ps[i]) != (problem.n,):
            raise ConfigError(f"constraint {i}: expected length-{problem.n} values and weights")
        if not np.all(np.isfinite(F)):
            raise DrfError(f"constraint {i}: oracle returned non-finite values")
        out[i] = float(np.dot(ps[i], F))
    return out


def phi(problem: DrfProblem, x: np.ndarray, ps: Sequence[np.ndarray]) -> float:
    """``max_i p^i . F^i(x)``."""
    if len(ps) != problem.m:
        raise ConfigError(f"expected {problem.m} distributions, got {len(ps)}")
    return float(np.max(constraint_values(problem, x, ps)))


def validate_problem(problem: DrfProblem, n_samples: int = 1000, rng=None,
                     rtol: float = 1e-9) -> list[str]:
    """Spot-check the declared bounds on random domain points.

    Returns a list of violation messages; an empty list means every sampled
    check passed.
    """
    if n_samples < 1:
        raise ConfigError(f"n_samples must be at least 1, got {n_samples}")
    rng = np.random.default_rng(0) if rng is None else rng
    dom = problem.domain
    G = problem.lipschitz_G
    out: list[str] = []
    for _ in range(n_samples):
        x = dom.sample(rng)
        y = dom.sample(rng)
        i = int(rng.integers(problem.m))
        r = int(rng.integers(problem.n))
        fx = problem.oracle.value(i, r, x)
        fy = problem.oracle.value(i, r, y)
        M = problem.bounds_M[i]
        if abs(fx) > M * (1 + rtol) + 1e-12:
            out.append(f"|F^{i}_{r}(x)| = {abs(fx):.6g} exceeds declared M[{i}] = {M:.6g}")
        dist = dom.norm(x - y)
        if abs(fx - fy) > G * dist * (1 + rtol) + 1e-12:
            out.append(f"|F^{i}_{r}(x) - F^{i}_{r}(y)| = {abs(fx - fy):.6g} exceeds "
                       f"G*||x-y|| = {G * dist:.6g}")
        g = problem.oracle.subgradient(i, r, x)
        gn = dom.dual_norm(g)
        if gn > G * (1 + rtol) + 1e-12:
            out.append(f"subgradient dual norm {gn:.6g} of F^{i}_{r} exceeds declared G = {G:.6g}")
    return out


class UniformStream:
    """Buffered source of U[0, 1) draws on top of a numpy ``Generator``.

    Drawing scalars one by one from a ``Generator`` is slow; this hands
    them out from a refilled block. The sequence of values is the same as
    repeated ``gen.random(block)`` calls, so it is reproducible from the seed.
    """

    __slots__ = ("_gen", "_block", "_buf", "_pos")

    def __init__(self, gen: np.random.Generator, block: int = 4096):
        self._gen = gen
        self._block = int(block)
        self._buf = gen.random(self._block)
        self._pos = 0

    def random(self, size: int | None = None):
        if size is None:
            if self._pos >= self._block:
                self._buf = self._gen.random(self._block)
                self._pos = 0
            u = self._buf[self._pos]
            self._pos += 1
            return float(u)
        out = np.empty(size)
        filled = 0
        while filled < size:
            if self._pos >= self._block:
                self._buf = self._gen.random(self._block)
                self._pos = 0
            take = min(size - filled, self._block - self._pos)
            out[filled:filled + take] = self._buf[self._pos:self._pos + take]
            self._pos += take
            filled += take
        return out


def spawn_streams(seed: int, count: int) -> list[UniformStream]:
    """Independent buffered streams derived from one seed."""
    seqs = np.random.SeedSequence(int(seed)).spawn(count)
    return [UniformStream(np.random.Generator(np.random.Philox(s))) for s in seqs]
