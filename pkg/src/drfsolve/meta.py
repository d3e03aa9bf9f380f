"""Meta-solver: planning, the main loop, feasibility tests and binary search.

Each run alternates distribution steps (one per constraint) with a decision
step, keeps ``1/sqrt(t)``-weighted averages of the iterates, optionally
checks the saddle-point gap every ``sp_gap_every`` iterations, and ends with
either the exact test on ``phi(x_bar, p_bar)`` or the sampled test on the
weighted sum of the per-iteration estimates.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .ambiguity import Chi2Set, DistState, project
from .core import (
    Certificate,
    CertificateKind,
    CertificateSource,
    ConfigError,
    DomainError,
    DrfError,
    DrfProblem,
    RunningAverage,
    phi,
    spawn_streams,
)
from .pupdate import bmd_step, ofo_p_step
from .spgap import sp_gap
from .xupdate import approx_max_index, ofo_x_step, sofo_x_step

__all__ = [
    "SolverConfig",
    "Schedule",
    "Checkpoint",
    "Trace",
    "OptimizeResult",
    "omega_value",
    "rate_x",
    "rate_p",
    "smallest_horizon",
    "plan",
    "sample_size_hoeffding",
    "sample_size_bennett",
    "bennett_h",
    "resolve_k",
    "theta_weights",
    "run_feasibility",
    "exact_feasibility_test",
    "efficient_feasibility_test",
    "optimize_binary_search",
]

log = logging.getLogger("drfsolve")

_MAX_T = 1 << 62


@dataclass
class SolverConfig:
    """Solver settings. ``k`` is an integer or ``"auto-hoeffding"`` / ``"auto-bennett:<var>"``."""

    epsilon: float
    c_k: float = 0.05
    nu0: float = 0.05
    nu1: float = 0.05
    omega_override: float | None = None
    w_scale_override: float | None = None
    k: int | str = 100
    mode: str = "sofo"
    sp_gap_every: int | None = None
    max_iters_override: int | None = None
    feasibility_test: str = "exact"
    seed: int = 0
    inner_min_budget: int = 2000
    rho: float = 5.0
    delta: float = 0.9
    cg_override: float | None = None
    sampler: str = "fenwick"
    threads: int = 1

    def __post_init__(self):
        def bad(key, msg):
            raise ConfigError(f"invalid config key '{key}': {msg}")

        if not (isinstance(self.epsilon, (int, float)) and self.epsilon > 0):
            bad("epsilon", f"must be a positive number, got {self.epsilon!r}")
        if not (0 < self.c_k < 0.5):
            bad("c_k", f"must lie in (0, 1/2), got {self.c_k!r}")
        for key in ("nu0", "nu1"):
            v = getattr(self, key)
            if not (0 < v < 1):
                bad(key, f"must lie in (0, 1), got {v!r}")
        if self.mode not in ("sofo", "ofo"):
            bad("mode", f"must be 'sofo' or 'ofo', got {self.mode!r}")
        if self.feasibility_test not in ("exact", "efficient"):
            bad("feasibility_test", f"must be 'exact' or 'efficient', got {self.feasibility_test!r}")
        if self.feasibility_test == "efficient":
            if self.mode == "ofo":
                bad("feasibility_test", "the efficient test needs sampled estimates (mode 'sofo')")
            if not self.c_k < 1.0 / 3.0:
                bad("c_k", f"the efficient test needs c_k < 1/3, got {self.c_k!r}")
        if self.sp_gap_every is not None and int(self.sp_gap_every) < 1:
            bad("sp_gap_every", f"must be a positive count, got {self.sp_gap_every!r}")
        if self.max_iters_override is not None and int(self.max_iters_override) < 2:
            bad("max_iters_override", f"must be at least 2, got {self.max_iters_override!r}")
        if int(self.inner_min_budget) < 1:
            bad("inner_min_budget", f"must be a positive count, got {self.inner_min_budget!r}")
        if self.w_scale_override is not None and not self.w_scale_override > 0:
            bad("c_s_override", f"must be positive, got {self.w_scale_override!r}")
        if self.omega_override is not None and not self.omega_override >= 1:
            bad("omega_override", f"must be at least 1, got {self.omega_override!r}")
        if not (0 < self.delta < 1):
            bad("delta", f"must lie in (0, 1), got {self.delta!r}")
        if not self.rho > 0:
            bad("rho", f"must be positive, got {self.rho!r}")
        if self.sampler not in ("fenwick", "cumulative"):
            bad("sampler", f"must be 'fenwick' or 'cumulative', got {self.sampler!r}")
        if int(self.threads) < 1:
            bad("threads", f"must be at least 1, got {self.threads!r}")
        self._parse_k()

    def _parse_k(self):
        k = self.k
        if isinstance(k, bool):
            raise ConfigError(f"invalid config key 'k': {k!r}")
        if isinstance(k, (int, np.integer)):
            if k < 1:
                raise ConfigError(f"invalid config key 'k': must be >= 1, got {k}")
            return ("fixed", int(k))
        if isinstance(k, str):
            if k == "auto-hoeffding":
                return ("hoeffding", None)
            if k.startswith("auto-bennett:"):
                try:
                    var = float(k.split(":", 1)[1])
                except ValueError:
                    var = -1.0
                if not var > 0:
                    raise ConfigError(f"invalid config key 'k': bad variance in {k!r}")
                return ("bennett", var)
        raise ConfigError(f"invalid config key 'k': expected an integer, 'auto-hoeffding' "
                          f"or 'auto-bennett:<variance>', got {k!r}")

    def chi2_set(self, n: int) -> Chi2Set:
        return Chi2Set(n, self.rho, self.delta, self.cg_override)


@dataclass
class Schedule:
    T: int
    T_tilde: int | None
    horizon: int
    c_x: float
    c_p: np.ndarray
    c_p_ofo: np.ndarray
    K: int
    omega: float
    w_omega: float
    C_g: float
    kappa_bullet: float
    kappa_circ: float

    def step_x(self, t: int) -> float:
        return self.c_x / math.sqrt(t)

    def step_p(self, i: int, t: int) -> float:
        return self.c_p[i] / math.sqrt(t)


@dataclass
class Checkpoint:
    t: int
    sp_gap: float
    phi_value: float
    elapsed_s: float


@dataclass
class Trace:
    checkpoints: list[Checkpoint] = field(default_factory=list)
    iterations: int = 0
    wall_time_s: float = 0.0
    source: CertificateSource | None = None

    @property
    def final_sp_gap(self) -> float | None:
        return self.checkpoints[-1].sp_gap if self.checkpoints else None


def omega_value(m: int, nu0: float, override: float | None = None) -> float:
    if override is not None:
        return float(override)
    return max(1.0, math.log(4.0 * m / nu0))


def rate_x(T: float, C_g: float, G: float, D_x: float) -> float:
    return C_g * G * math.log(T) * math.sqrt(2.0 * D_x) / math.sqrt(T)


def rate_p(T: float, C_g: float, M: float, rho: float, delta: float) -> float:
    return 2.0 * C_g * M * math.log(T) * math.sqrt(2.0 * rho) / (delta * math.sqrt(T))


def smallest_horizon(pred: Callable[[int], bool], start: int = 8) -> int:
    """Smallest integer ``T >= start`` with ``pred(T)``, for monotone ``pred``."""
    if pred(start):
        return start
    lo, hi = start, 2 * start
    while not pred(hi):
        lo, hi = hi, 2 * hi
        if hi > _MAX_T:
            raise ConfigError("iteration horizon overflow: the bound cannot be met")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _bound_terms(problem: DrfProblem, cfg: SolverConfig, s: Chi2Set, omega: float):
    w = cfg.w_scale_override if cfg.w_scale_override is not None else 3.0 * math.sqrt(omega)
    D_x = problem.domain.diameter
    Mmax = float(np.max(problem.bounds_M))

    def lhs(T):
        return w * (rate_x(T, s.C_g, problem.lipschitz_G, D_x)
                    + rate_p(T, s.C_g, Mmax, s.rho, s.delta))

    return w, lhs


def theta_weights(T: int) -> np.ndarray:
    """Normalised weights ``theta_t`` for ``t = 1..T``."""
    w = 1.0 / np.sqrt(np.arange(1, T + 1, dtype=float))
    return w / w.sum()


def kappa_values(problem: DrfProblem, cfg: SolverConfig, T: int) -> tuple[float, float]:
    s = cfg.chi2_set(problem.n)
    omega = omega_value(problem.m, cfg.nu0, cfg.omega_override)
    w, _ = _bound_terms(problem, cfg, s, omega)
    eps = cfg.epsilon
    kb = w * rate_x(T, s.C_g, problem.lipschitz_G, problem.domain.diameter) / eps + cfg.c_k
    kc = w * max(rate_p(T, s.C_g, M, s.rho, s.delta) for M in problem.bounds_M) / eps
    return kb, kc


def plan(problem: DrfProblem, cfg: SolverConfig) -> Schedule:
    """Horizons, step constants, sample size and test thresholds."""
    s = cfg.chi2_set(problem.n)
    eps = cfg.epsilon
    omega = omega_value(problem.m, cfg.nu0, cfg.omega_override)
    w, lhs = _bound_terms(problem, cfg, s, omega)
    T = smallest_horizon(lambda t: lhs(t) + cfg.c_k * eps <= eps / 2.0)
    if cfg.c_k < 1.0 / 3.0:
        T_tilde = smallest_horizon(lambda t: lhs(t) + cfg.c_k * eps <= (1.0 - 2.0 * cfg.c_k) * eps)
    else:
        T_tilde = None  # the sampled test is unavailable for c_k >= 1/3
    G = problem.lipschitz_G
    D_x = problem.domain.diameter
    root = math.sqrt(D_x / omega)
    c_x = root / (s.C_g * G) if G > 0 else root
    n = problem.n
    c_p = np.empty(problem.m)
    c_p_ofo = np.empty(problem.m)
    for i, M in enumerate(problem.bounds_M):
        Mi = M if M > 0 else 1.0
        c_p[i] = 2.0 * s.delta / (s.C_g * Mi * n * n) * math.sqrt(s.rho / omega)
        # exact gradients have Euclidean norm <= M*sqrt(n) and D_p = 4 rho / n^2
        c_p_ofo[i] = 2.0 * math.sqrt(s.rho / omega) / (Mi * n ** 1.5)
    if cfg.feasibility_test == "efficient" and cfg.mode == "sofo":
        horizon = T_tilde
    else:
        horizon = T
    if cfg.max_iters_override is not None:
        horizon = int(cfg.max_iters_override)
    kb, kc = kappa_values(problem, cfg, T_tilde if T_tilde is not None else T)
    K = resolve_k(problem, cfg, horizon)
    return Schedule(T, T_tilde, horizon, c_x, c_p, c_p_ofo, K, omega, w, s.C_g, kb, kc)


def sample_size_hoeffding(problem: DrfProblem, cfg: SolverConfig, T: int) -> int:
    if T < 1:
        raise ConfigError(f"T must be at least 1, got {T}")
    M = float(np.max(problem.bounds_M))
    val = 8.0 * M * M / (cfg.c_k ** 2 * cfg.epsilon ** 2) * math.log(2.0 * problem.m * T / cfg.nu1)
    return max(1, math.ceil(val))


def bennett_h(t: float) -> float:
    return (1.0 + t) * math.log1p(t) - t


def sample_size_bennett(problem: DrfProblem, cfg: SolverConfig, T: int, sigma_sq: float) -> int:
    if not sigma_sq > 0:
        raise ConfigError(f"variance bound must be positive, got {sigma_sq}")
    if T < 1:
        raise ConfigError(f"T must be at least 1, got {T}")
    M = float(np.max(problem.bounds_M))
    h = bennett_h(2.0 * M * cfg.c_k * cfg.epsilon / sigma_sq)
    if h <= 0:
        raise ConfigError("Bennett sample size is unbounded for these parameters")
    val = 4.0 * M * M / sigma_sq / h * math.log(2.0 * problem.m * T / cfg.nu1)
    return max(1, math.ceil(val))


def resolve_k(problem: DrfProblem, cfg: SolverConfig, T: int) -> int:
    kind, arg = cfg._parse_k()
    if kind == "fixed":
        return arg
    if kind == "hoeffding":
        return sample_size_hoeffding(problem, cfg, T)
    return sample_size_bennett(problem, cfg, T, arg)


# feasibility tests ---------------------------------------------------------

def exact_feasibility_test(problem: DrfProblem, x_bar, p_bar: Sequence[np.ndarray],
                           epsilon: float) -> Certificate:
    """Infeasible iff ``phi(x_bar, p_bar) > epsilon/2``."""
    value = phi(problem, x_bar, p_bar)
    return _certificate(value, epsilon / 2.0, CertificateSource.EXACT_TEST, epsilon, x_bar, p_bar)


def efficient_feasibility_test(f_hat_history, theta, kappa_bullet: float, c_k: float,
                               epsilon: float, x_bar, p_bar: Sequence[np.ndarray] = (),
                               horizon: int | None = None) -> Certificate:
    """Infeasible iff ``max_i sum_t theta_t f_hat[t, i] > (kappa_bullet + c_k) * epsilon``.

    ``theta`` is normalised here, so raw ``1/sqrt(t)`` weights are accepted.
    """
    f = np.asarray(f_hat_history, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if f.ndim != 2 or f.shape[0] != theta.shape[0]:
        raise ConfigError("estimate history and weights must cover the same iterations")
    if horizon is not None and f.shape[0] != horizon:
        raise ConfigError(f"estimate history is incomplete: {f.shape[0]} of {horizon} iterations")
    if not np.all(np.isfinite(f)):
        raise ConfigError("estimate history contains missing entries")
    stat = float(np.max((theta / theta.sum()) @ f))
    thr = (kappa_bullet + c_k) * epsilon
    return _certificate(stat, thr, CertificateSource.EFFICIENT_TEST, epsilon, x_bar, p_bar)


def _certificate(stat, thr, source, epsilon, x_bar, p_bar):
    kind = CertificateKind.INFEASIBLE if stat > thr else CertificateKind.EPS_FEASIBLE
    return Certificate(kind, source, float(epsilon), np.asarray(x_bar, dtype=float).copy(),
                       [np.asarray(p, dtype=float).copy() for p in p_bar], float(stat), float(thr))


# main loop -------------------------------------------------------------------

def _prepare_warm(problem, s, warm):
    x0, p0 = warm
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (problem.d,):
        raise DomainError(f"warm-start x has shape {x0.shape}, expected ({problem.d},)")
    xp = problem.domain.project(x0)
    if float(np.max(np.abs(xp - x0))) > 1e-6:
        raise DomainError("warm-start x lies outside the domain by more than 1e-6")
    if len(p0) != problem.m:
        raise DomainError(f"warm start has {len(p0)} distributions, expected {problem.m}")
    ps = []
    for i, p in enumerate(p0):
        p = np.asarray(p, dtype=float)
        if p.shape != (problem.n,):
            raise DomainError(f"warm-start p[{i}] has shape {p.shape}, expected ({problem.n},)")
        pp = project(s, p)
        if float(np.max(np.abs(pp - p))) > 1e-6:
            raise DomainError(f"warm-start p[{i}] lies outside the ambiguity set by more than 1e-6")
        ps.append(pp)
    return xp, ps


def run_feasibility(problem: DrfProblem, cfg: SolverConfig, warm=None,
                    schedule: Schedule | None = None,
                    monitor: Callable | None = None) -> tuple[Certificate, Trace]:
    """Run the meta-solver and return a certificate with its trace.

    ``warm`` is an optional ``(x0, [p0_1, ..., p0_m])``. ``monitor``, if
    given, is called as ``monitor(t, x_t, dists, estimate)`` before the
    updates of iteration ``t``; ``dists`` are the distribution states (or
    dense vectors in exact mode) and ``estimate`` the sampled maximum
    estimate (``None`` in exact mode).
    """
    s = cfg.chi2_set(problem.n)
    sch = schedule if schedule is not None else plan(problem, cfg)
    T = sch.horizon
    m = problem.m
    eps = cfg.epsilon
    sofo = cfg.mode == "sofo"
    efficient = cfg.feasibility_test == "efficient"
    streams = spawn_streams(cfg.seed, 1 + 2 * m)
    x_stream, bmd_streams, est_streams = streams[0], streams[1:1 + m], streams[1 + m:]

    if warm is not None:
        x, p_init = _prepare_warm(problem, s, warm)
    else:
        x, p_init = problem.initial_point(), [None] * m

    avg = RunningAverage()
    if sofo:
        states = [DistState(s, p_init[i], cfg.sampler) for i in range(m)]
        for st in states:
            st.accumulate(1.0)
        avg.add(1.0, x)
    else:
        ps = [np.full(problem.n, 1.0 / problem.n) if p is None else p.copy() for p in p_init]
        avg.add(1.0, x, ps)
    fhist = np.full((T, m), np.nan) if efficient else None
    trace = Trace()
    pool = ThreadPoolExecutor(int(cfg.threads)) if cfg.threads > 1 and m > 1 else None
    K = sch.K
    T_s = cfg.sp_gap_every
    t0 = time.monotonic()

    def averages():
        if sofo:
            return avg.avg_x.copy(), [st.average() for st in states]
        return avg.avg_x.copy(), [p.copy() for p in avg.avg_p]

    try:
        for t in range(1, T):
            try:
                if sofo:
                    est = approx_max_index(problem, states, x, K, est_streams)
                    if efficient:
                        fhist[t - 1] = est.f_hat
                    if monitor is not None:
                        monitor(t, x, states, est)
                    x_new = sofo_x_step(problem, states, x, sch.step_x(t), est, x_stream)
                    if pool is None:
                        for i in range(m):
                            bmd_step(problem, i, states[i], x, sch.step_p(i, t), bmd_streams[i])
                    else:
                        list(pool.map(lambda i: bmd_step(problem, i, states[i], x,
                                                         sch.step_p(i, t), bmd_streams[i]),
                                      range(m)))
                    x = x_new
                    theta = 1.0 / math.sqrt(t + 1)
                    for st in states:
                        st.accumulate(theta)
                    avg.add(theta, x)
                else:
                    if monitor is not None:
                        monitor(t, x, ps, None)
                    x_new = ofo_x_step(problem, ps, x, sch.step_x(t))
                    ps = [ofo_p_step(s, problem, i, ps[i], x, sch.c_p_ofo[i] / math.sqrt(t))
                          for i in range(m)]
                    x = x_new
                    avg.add(1.0 / math.sqrt(t + 1), x, ps)
            except DrfError:
                raise
            except Exception as exc:  # oracle failure
                raise DrfError(f"iteration {t}: {type(exc).__name__}: {exc}") from exc
            if T_s is not None and t % T_s == 0:
                x_bar, p_bar = averages()
                rep = sp_gap(problem, s, x_bar, p_bar, cfg.inner_min_budget)
                elapsed = time.monotonic() - t0
                trace.checkpoints.append(Checkpoint(t + 1, rep.gap, rep.phi_at_pair, elapsed))
                log.info("t=%d sp_gap=%.6g phi=%.6g", t + 1, rep.gap, rep.phi_at_pair)
                if rep.gap <= eps / 2.0:
                    cert = _certificate(rep.phi_at_pair, eps / 2.0,
                                        CertificateSource.EARLY_STOP_SP_GAP, eps, x_bar, p_bar)
                    trace.iterations = t + 1
                    trace.wall_time_s = elapsed
                    trace.source = cert.source
                    return cert, trace

        x_bar, p_bar = averages()
        if efficient:
            est = approx_max_index(problem, states, x, K, est_streams)
            fhist[T - 1] = est.f_hat
            kb = sch.kappa_bullet
            if T != sch.T_tilde:
                kb, _ = kappa_values(problem, cfg, T)
            cert = efficient_feasibility_test(fhist, 1.0 / np.sqrt(np.arange(1, T + 1)), kb,
                                              cfg.c_k, eps, x_bar, p_bar, horizon=T)
        else:
            cert = exact_feasibility_test(problem, x_bar, p_bar, eps)
    finally:
        if pool is not None:
            pool.shutdown()
    trace.iterations = T
    trace.wall_time_s = time.monotonic() - t0
    trace.source = cert.source
    return cert, trace


# optimisation by bisection on the objective threshold -----------------------

@dataclass
class OptimizeResult:
    value: float
    x: np.ndarray
    stages: list[tuple[float, Certificate, Trace]]

    @property
    def total_iterations(self) -> int:
        return sum(tr.iterations for _, _, tr in self.stages)


def optimize_binary_search(family: Callable[[float], DrfProblem], cfg: SolverConfig,
                           lo: float, hi: float, obj_tol: float, warm_start: bool = True,
                           trusted: bool = False) -> OptimizeResult:
    """Smallest threshold in ``[lo, hi]`` certified feasible, up to ``obj_tol``.

    ``family(c)`` builds the feasibility problem for threshold ``c``. Unless
    ``trusted``, the bracket is checked: ``hi`` must certify feasible and,
    when bisection is needed, ``lo`` must certify infeasible. Each stage
    starts from the averages of the previous one when ``warm_start`` is set,
    except the check at ``lo``, which always starts cold.
    """
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ConfigError(f"invalid bracket: need lo < hi, got lo={lo}, hi={hi}")
    if not obj_tol > 0:
        raise ConfigError(f"obj_tol must be positive, got {obj_tol}")
    stages = []
    warm = None

    def solve(c, cold=False):
        nonlocal warm
        start = warm if warm_start and not cold else None
        cert, trace = run_feasibility(family(c), cfg, start)
        stages.append((c, cert, trace))
        warm = (cert.x_bar, cert.p_bar)
        return cert

    cert = solve(hi)
    if not cert.feasible and not trusted:
        raise ConfigError(f"invalid bracket: upper threshold {hi} was not certified feasible")
    best_x = cert.x_bar
    if hi - lo > obj_tol * (1 + 1e-9) and not trusted:
        # the lower check sits far from the upper solution, so it starts cold
        if solve(lo, cold=True).feasible:
            raise ConfigError(f"invalid bracket: lower threshold {lo} was certified feasible")
    while hi - lo > obj_tol * (1 + 1e-9):
        mid = 0.5 * (lo + hi)
        cert = solve(mid)
        if cert.feasible:
            hi, best_x = mid, cert.x_bar
        else:
            lo = mid
    return OptimizeResult(hi, best_x, stages)
