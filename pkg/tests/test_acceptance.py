"""Acceptance suite: eleven end-to-end criteria, one PASS/FAIL line each.

Run under pytest (the lines are repeated in the terminal summary) or
directly with ``python tests/test_acceptance.py``.
"""
from __future__ import annotations

import math
import os
import sys
import time

import numpy as np
from scipy.optimize import brentq, minimize_scalar

sys.path.insert(0, os.path.dirname(__file__))
from oracles import projection_oracle, sup_dual_grid, sup_grid_2d  # noqa: E402

from drfsolve.ambiguity import Chi2Set, DistState, audit, project, sup_linear  # noqa: E402
from drfsolve.core import ConstraintOracle, DrfProblem  # noqa: E402
from drfsolve.meta import (  # noqa: E402
    SolverConfig,
    optimize_binary_search,
    plan,
    run_feasibility,
    sample_size_bennett,
    sample_size_hoeffding,
)
from drfsolve.mirror import EuclideanBall  # noqa: E402
from drfsolve.problems import (  # noqa: E402
    FairnessLrSpec,
    LinearOracle,
    build_fairness_lr,
    build_newsvendor,
    build_param_select,
    gen_fairness_lr,
    gen_newsvendor,
    gen_param_select,
    toy_feasible,
    toy_infeasible,
)
from drfsolve.pupdate import bmd_step  # noqa: E402
from drfsolve.spgap import sp_gap  # noqa: E402
from drfsolve.xupdate import MaxEstimate, sofo_x_step  # noqa: E402

LINES: list[str] = []


def report(num: int, ok: bool, detail: str) -> None:
    line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    LINES.append(line)
    print(line, flush=True)
    assert ok, line


class Fixed:
    """A stream that always returns ``u``."""

    def __init__(self, u):
        self.u = u

    def random(self, size=None):
        return self.u if size is None else np.full(size, self.u)


def random_set(rng, n_max):
    n = int(rng.integers(2, n_max + 1))
    rho = float(rng.uniform(0.02, n / 2))
    delta = float(rng.uniform(0.0, 0.95))
    return n, rho, delta


# ---------------------------------------------------------------------------


def test_c01_projection_oracle():
    rng = np.random.default_rng(101)
    t0 = time.monotonic()
    worst = 0.0
    for k in range(200):
        n, rho, delta = random_set(rng, 6)
        scale = [0.2, 1.0, 5.0][k % 3]
        w = np.abs(1.0 / n + scale * rng.normal(size=n) / n) if k % 4 else rng.normal(size=n)
        got = project(Chi2Set(n, rho, delta), w)
        ref = projection_oracle(n, rho, delta, w)
        worst = max(worst, float(np.max(np.abs(got - ref))))
    el = time.monotonic() - t0
    report(1, worst <= 1e-5 and el < 60, f"200 tuples, max |diff| = {worst:.2e} (tol 1e-5), {el:.1f}s")


def test_c02_sup_linear_oracle():
    rng = np.random.default_rng(202)
    t0 = time.monotonic()
    worst = 0.0
    for k in range(200):
        n, rho, delta = random_set(rng, 5)
        F = rng.normal(size=n) * [1.0, 0.1, 10.0][k % 3]
        if k % 7 == 0:
            F = -np.abs(F)
        v, _ = sup_linear(Chi2Set(n, rho, delta), F)
        ref = sup_grid_2d(rho, delta, F) if n == 2 else sup_dual_grid(n, rho, delta, F)
        worst = max(worst, abs(v - ref))
    el = time.monotonic() - t0
    report(2, worst <= 1e-4 and el < 60, f"200 instances, max |diff| = {worst:.2e} (tol 1e-4), {el:.1f}s")


class Softplus(ConstraintOracle):
    """``F_r(x) = log(1 + exp(a_r . x)) - b_r``."""

    def __init__(self, A, b):
        self.A, self.b = A, b
        self.m, (self.n, self.d) = 1, A.shape

    def value(self, i, r, x):
        return float(np.logaddexp(0.0, self.A[r] @ x) - self.b[r])

    def subgradient(self, i, r, x):
        return self.A[r] / (1.0 + np.exp(-(self.A[r] @ x)))


def test_c03_estimator_unbiasedness():
    rng = np.random.default_rng(303)
    worst_p = worst_x = 0.0
    for n in range(2, 11):
        s = Chi2Set(n, min(1.5, n / 2), 0.5)
        p = project(s, np.abs(1.0 / n + rng.normal(size=n) / (2 * n)))
        q = np.concatenate([[0.0], np.cumsum(p) / p.sum()])
        mids = 0.5 * (q[:-1] + q[1:])
        # BMD: coordinate r is touched with probability p_r / sum(p)
        Fv = rng.normal(size=n)
        prob = DrfProblem(LinearOracle([np.zeros((n, 2))], [Fv]), 1, n, 2, 0.0, [3.0],
                          EuclideanBall(2, 1.0))
        expect = np.zeros(n)
        for r in range(n):
            st = DistState(s, p)
            res = bmd_step(prob, 0, st, np.zeros(2), 1e-3, Fixed(mids[r]))
            assert res.touched == r
            expect[r] += (p[r] / p.sum()) * res.gradient
        worst_p = max(worst_p, float(np.max(np.abs(expect - Fv))))
        # eps-SMD: E[sum(p) dF_r] over r ~ p/sum(p) is the p-weighted subgradient
        d = 3
        A, b = rng.normal(size=(n, d)), rng.normal(size=n)
        sp = DrfProblem(Softplus(A, b), 1, n, d, 10.0, [10.0], EuclideanBall(d, 1e6))
        x = 0.1 * rng.normal(size=d)
        st = DistState(s, p)
        g_mean = np.zeros(d)
        for r in range(n):
            out = sofo_x_step(sp, [st], x, 1.0, MaxEstimate(0, np.zeros(1)), Fixed(mids[r]))
            g_mean += (p[r] / p.sum()) * (x - out)
        full = sum(p[r] * A[r] / (1.0 + np.exp(-(A[r] @ x))) for r in range(n))
        worst_x = max(worst_x, float(np.max(np.abs(g_mean - full))))
    ok = worst_p <= 1e-12 and worst_x <= 1e-12
    report(3, ok, f"n=2..10 enumeration: BMD max err {worst_p:.1e}, eps-SMD max err {worst_x:.1e} (tol 1e-12)")


def test_c04_cache_integrity():
    n = 10_000
    rng = np.random.default_rng(404)
    s = Chi2Set(n, 5.0, 0.9)
    prob = DrfProblem(LinearOracle([np.zeros((n, 1))], [rng.normal(size=n)]), 1, n, 1, 0.0,
                      [5.0], EuclideanBall(1, 1.0))
    st = DistState(s)
    u = np.random.default_rng(7)
    x = np.zeros(1)
    worst = 0.0
    for t in range(1, 100_001):
        bmd_step(prob, 0, st, x, 50.0 / (n * n * math.sqrt(t)), u)
        if t % 25_000 == 0:
            worst = max(worst, audit(st).max_error)
    # the two samplers under one shared draw sequence
    a, b = DistState(s, sampler="fenwick"), DistState(s, sampler="cumulative")
    ua, ub = np.random.default_rng(99), np.random.default_rng(99)
    same = 0
    for t in range(1, 1001):
        ra = bmd_step(prob, 0, a, x, 50.0 / (n * n * math.sqrt(t)), ua).touched
        rb = bmd_step(prob, 0, b, x, 50.0 / (n * n * math.sqrt(t)), ub).touched
        same += ra == rb
    ok = worst < 1e-8 and same == 1000
    report(4, ok, f"1e5 steps on n=1e4: audit max {worst:.1e} (tol 1e-8); samplers agree on {same}/1000 draws")


def test_c05_certificates():
    inf, fea = toy_infeasible(), toy_feasible()
    correct, slowest = 0, 0.0
    for seed in range(20):
        for prob, want in ((inf, False), (fea, True)):
            cfg = SolverConfig(epsilon=0.1, seed=seed, sp_gap_every=200, max_iters_override=20_000)
            t0 = time.monotonic()
            cert, _ = run_feasibility(prob, cfg)
            slowest = max(slowest, time.monotonic() - t0)
            ok = cert.feasible == want
            if want:
                # the witness must be eps-feasible under the worst case
                F = prob.oracle.values(0, cert.x_bar)
                ok = ok and sup_dual_grid(prob.n, cfg.rho, cfg.delta, F) <= cfg.epsilon
            correct += ok
    report(5, correct == 40 and slowest < 30,
           f"{correct}/40 correct over 20 seeds x 2 toys, slowest run {slowest:.2f}s (limit 30s)")


def tiny_instance(seed):
    rng = np.random.default_rng(seed)
    n, d = 8, 3
    A, b = [], []
    sign = -1.0 if seed % 2 == 0 else 1.0
    for _ in range(2):
        a = rng.normal(size=(n, d))
        a *= 0.2 * rng.random((n, 1)) / np.linalg.norm(a, axis=1, keepdims=True)
        A.append(a)
        b.append(sign * 0.5 + 0.1 * rng.uniform(-1, 1, n))
    return DrfProblem(LinearOracle(A, b), 2, n, d, 0.2, [0.8, 0.8], EuclideanBall(d, 1.0))


def test_c06_test_agreement():
    agree, worst = 0, 0.0
    for seed in range(20):
        prob = tiny_instance(seed)
        verdicts = []
        for test in ("exact", "efficient"):
            dev = []

            def mon(t, x, states, est):
                exact = [float(st.materialize() @ prob.oracle.values(i, x))
                         for i, st in enumerate(states)]
                dev.append(float(np.max(np.abs(np.array(exact) - est.f_hat))))

            cfg = SolverConfig(epsilon=0.2, k=8, rho=2.0, w_scale_override=1.0, max_iters_override=2000,
                               feasibility_test=test, seed=seed)
            cert, _ = run_feasibility(prob, cfg, monitor=mon)
            verdicts.append(cert.feasible)
            worst = max(worst, max(dev))
        agree += verdicts[0] == verdicts[1] and verdicts[0] == (seed % 2 == 0)
    report(6, agree == 20 and worst <= 1e-12,
           f"K=n=8: verdicts agree (and are correct) on {agree}/20 seeds; max |f_hat - f| = {worst:.1e}")


def per_iteration(prob, mode, iters):
    stamps = []
    cfg = SolverConfig(epsilon=0.05, k=100, mode=mode, w_scale_override=1.0,
                       max_iters_override=iters + 1)
    run_feasibility(prob, cfg, monitor=lambda *a: stamps.append(time.perf_counter()))
    return (stamps[-1] - stamps[5]) / (len(stamps) - 6)


def test_c07_per_iteration_scaling():
    t0 = time.monotonic()
    res = {}
    for n in (1_000, 100_000):
        prob = build_param_select(gen_param_select(10, 15, 3, n, 0.01, 0))
        res[n, "sofo"] = per_iteration(prob, "sofo", 3000)
        res[n, "ofo"] = per_iteration(prob, "ofo", 300 if n == 1_000 else 30)
        del prob
    rs = res[100_000, "sofo"] / res[1_000, "sofo"]
    ro = res[100_000, "ofo"] / res[1_000, "ofo"]
    el = time.monotonic() - t0
    report(7, rs <= 3.0 and ro >= 30.0 and el < 600,
           f"SOFO {res[1_000, 'sofo'] * 1e6:.0f}->{res[100_000, 'sofo'] * 1e6:.0f} us/iter (x{rs:.2f}, "
           f"limit 3); OFO x{ro:.0f} (need >= 30); {el:.0f}s")


def test_c08_convergence_trend():
    early, mono = 0, 0
    for seed in range(20):
        prob = build_param_select(gen_param_select(5, 10, 3, 2000, 0.001, seed))
        cfg = SolverConfig(epsilon=0.05, k=100, w_scale_override=1.0, sp_gap_every=2000,
                           max_iters_override=80_000, seed=seed)
        T = plan(prob, cfg).T
        cert, tr = run_feasibility(prob, cfg)
        hit = [c.t for c in tr.checkpoints if c.sp_gap <= cfg.epsilon / 2]
        early += bool(hit) and hit[0] < T
        gaps = []
        for K in (1, 10, 100):
            c2 = SolverConfig(epsilon=0.05, k=K, w_scale_override=1.0, max_iters_override=2000,
                              seed=seed)
            cert, _ = run_feasibility(prob, c2)
            gaps.append(sp_gap(prob, c2.chi2_set(prob.n), cert.x_bar, cert.p_bar, 2000).gap)
        mono += gaps[0] >= gaps[1] >= gaps[2]
    report(8, early >= 18 and mono >= 16,
           f"gap <= eps/2 before planned T on {early}/20 seeds (need 18); "
           f"gap monotone in K at t=2000 on {mono}/20 (need 16)")


def test_c09_k_accuracy():
    base = gen_fairness_lr(5000, 50, 0)
    # loss bound tightened so that the loss and covariance constraints compete
    spec = FairnessLrSpec(base.features, base.labels, base.sensitive, base.cov_bound,
                          math.log(2.0) + base.cov_bound + 0.0015)
    prob = build_fairness_lr(spec)
    eps, c_k, iters = 0.02, 0.05, 10_000
    tol_frac, exact_frac = [], []
    for K in (1, 10, 50, 100, 200):
        hits = [0, 0]

        def mon(t, x, states, est):
            f = np.array([st.materialize() @ prob.oracle.values(i, x) for i, st in enumerate(states)])
            i_star = int(np.argmax(f))
            hits[0] += est.index == i_star or abs(f[est.index] - f[i_star]) <= c_k * eps
            hits[1] += est.index == i_star

        cfg = SolverConfig(epsilon=eps, c_k=c_k, k=K, delta=0.95, w_scale_override=1.0,
                           max_iters_override=iters + 1, seed=1)
        run_feasibility(prob, cfg, monitor=mon)
        tol_frac.append(hits[0] / iters)
        exact_frac.append(hits[1] / iters)
    ok = all(a <= b for a, b in zip(tol_frac, tol_frac[1:]))
    report(9, ok, "within C_K*eps: " + " ".join(f"{v:.4f}" for v in tol_frac)
           + " | exact index: " + " ".join(f"{v:.4f}" for v in exact_frac) + " for K=1,10,50,100,200")


# -- newsvendor grid oracle ---------------------------------------------------


def nv_loss(spec, x):
    k = spec.backorder + spec.retail - spec.salvage
    return ((spec.cost - spec.salvage) @ x - np.minimum(x[None, :], spec.demand) @ k
            + spec.demand @ spec.backorder)


def nv_point(spec, rho, delta, x):
    """Smallest loss threshold for order ``x`` and whether some tau meets the CVaR bound."""
    n = spec.n
    L = nv_loss(spec, x)
    h = lambda c: sup_dual_grid(n, rho, delta, L - c, points=300)  # noqa: E731
    c_star = brentq(h, L.min() - 1e-9, L.max() + 1e-9, xtol=1e-10)
    beta, alpha = spec.cvar_level, spec.cvar_bound

    def cvar(tau):
        return sup_dual_grid(n, rho, delta, tau + np.maximum(L - tau, 0.0) / beta - alpha, points=300)

    res = minimize_scalar(cvar, bounds=spec.tau_interval, method="bounded", options={"xatol": 1e-8})
    return c_star, min(res.fun, cvar(spec.tau_interval[0]), cvar(spec.tau_interval[1])) <= 0


def nv_grid_oracle(spec, rho, delta, levels=16, zooms=2):
    """Exhaustive grid over ``{x >= 0, sum x <= C}`` followed by local grid refinements."""
    C, d = spec.budget, spec.d

    def search(axes):
        pts = np.array(np.meshgrid(*axes, indexing="ij")).reshape(d, -1).T
        pts = pts[(pts.min(axis=1) >= 0) & (pts.sum(axis=1) <= C + 1e-12)]
        # the uniform distribution is a member, so the mean loss bounds c_star from below
        lower = np.array([nv_loss(spec, x).mean() for x in pts])
        best, arg = math.inf, None
        for j in np.argsort(lower):
            if lower[j] >= best:
                break
            c, ok = nv_point(spec, rho, delta, pts[j])
            if ok and c < best:
                best, arg = c, pts[j]
        return best, arg

    h = C / (levels - 1)
    best, arg = search([np.linspace(0, C, levels)] * d)
    for _ in range(zooms):
        axes = [np.linspace(a - 2 * h, a + 2 * h, 17) for a in arg]
        h = 4 * h / 16
        b2, a2 = search(axes)
        if b2 <= best:
            best, arg = b2, a2
    return best, arg


def test_c10_optimization_end_to_end():
    spec = gen_newsvendor(3, 200, 0, cvar_margin=0.02)
    family, _ = build_newsvendor(spec)
    base = SolverConfig(epsilon=0.03, k=50, w_scale_override=1.0, sp_gap_every=100,
                        max_iters_override=20_000)
    c_star, _ = nv_grid_oracle(spec, base.rho, base.delta)
    tol = 0.01
    lo, hi = c_star - 0.1, c_star + 0.1
    within, ratios, warm_tot, cold_tot = 0, [], [], []
    for seed in range(20):
        cfg = SolverConfig(**{**base.__dict__, "seed": seed})
        rw = optimize_binary_search(family, cfg, lo, hi, tol, warm_start=True)
        rc = optimize_binary_search(family, cfg, lo, hi, tol, warm_start=False)
        within += abs(rw.value - c_star) <= cfg.epsilon + tol and abs(rc.value - c_star) <= cfg.epsilon + tol
        warm_tot.append(rw.total_iterations)
        cold_tot.append(rc.total_iterations)
        ratios.append(rw.total_iterations / rc.total_iterations)
    med = float(np.median(ratios))
    report(10, within == 20 and med <= 1.1,
           f"grid optimum {c_star:.5f}; {within}/20 seeds within eps+tol; median warm/cold iterations "
           f"{med:.3f} (limit 1.1; medians {np.median(warm_tot):.0f} vs {np.median(cold_tot):.0f})")


# -- planning formulas ----------------------------------------------------------


def direct_plan(m, n, G, Ms, D, rho, delta, eps, c_k, nu0, C_s, omega_override, cg):
    omega = omega_override if omega_override is not None else max(1.0, math.log(4 * m / nu0))
    w = C_s if C_s is not None else 3 * math.sqrt(omega)
    C_g = cg if cg is not None else 1 + math.sqrt(2 * rho / n)
    Mx = max(Ms)

    def R(T):
        rx = C_g * G * math.log(T) * math.sqrt(2 * D) / math.sqrt(T)
        rp = 2 * C_g * Mx * math.log(T) * math.sqrt(2 * rho) / (delta * math.sqrt(T))
        return w * (rx + rp) + c_k * eps

    def smallest(rhs):
        if R(8) <= rhs:
            return 8
        T = math.ceil(brentq(lambda t: R(t) - rhs, 8.0, 1e19, xtol=1e-6, rtol=1e-15))
        while R(T) > rhs:
            T += 1
        while T > 8 and R(T - 1) <= rhs:
            T -= 1
        return T

    T = smallest(eps / 2)
    Tt = smallest((1 - 2 * c_k) * eps) if c_k < 1 / 3 else None
    Th = Tt if Tt is not None else T
    c_x = math.sqrt(D / omega) / (C_g * G)
    c_p = [2 * delta / (C_g * M * n * n) * math.sqrt(rho / omega) for M in Ms]
    kb = w * C_g * G * math.log(Th) * math.sqrt(2 * D) / math.sqrt(Th) / eps + c_k
    kc = w * max(2 * C_g * M * math.log(Th) * math.sqrt(2 * rho) / (delta * math.sqrt(Th))
                 for M in Ms) / eps
    return T, Tt, c_x, c_p, kb, kc


def test_c11_planning_formulas():
    rng = np.random.default_rng(1111)
    ints_ok = floats_ok = 0
    worst = 0.0
    for k in range(50):
        m, n, d = int(rng.integers(1, 6)), int(rng.integers(10, 5000)), int(rng.integers(1, 50))
        R = float(rng.uniform(0.5, 20))
        G = float(rng.uniform(0.05, 2))
        Ms = list(rng.uniform(0.05, 2, m))
        rho = float(rng.uniform(0.1, min(10, n / 2)))
        delta = float(rng.uniform(0.5, 0.99))
        eps = float(rng.uniform(0.01, 0.5))
        c_k = float(rng.uniform(0.01, 0.45))
        nu0, nu1 = float(rng.uniform(0.01, 0.2)), float(rng.uniform(0.01, 0.2))
        C_s = float(rng.uniform(0.5, 3)) if k % 2 else None
        om = float(rng.uniform(1, 5)) if k % 5 == 0 else None
        cg = float(rng.uniform(1, 3)) if k % 7 == 0 else None
        prob = DrfProblem(LinearOracle([np.zeros((n, d))] * m, [np.zeros(n)] * m), m, n, d, G, Ms,
                          EuclideanBall(d, R))
        cfg = SolverConfig(epsilon=eps, c_k=c_k, nu0=nu0, nu1=nu1, w_scale_override=C_s,
                           omega_override=om, rho=rho, delta=delta, cg_override=cg)
        sch = plan(prob, cfg)
        T, Tt, c_x, c_p, kb, kc = direct_plan(m, n, G, Ms, 2 * R * R, rho, delta, eps, c_k, nu0,
                                              C_s, om, cg)
        Tq = int(rng.integers(1, 10**7))
        s2 = float(rng.uniform(1e-4, 1.0))
        Mx = max(Ms)
        kh = max(1, math.ceil(8 * Mx**2 / (c_k**2 * eps**2) * math.log(2 * m * Tq / nu1)))
        tb = 2 * Mx * c_k * eps / s2
        hb = (1 + tb) * math.log(1 + tb) - tb
        kbn = max(1, math.ceil(4 * Mx**2 / s2 / hb * math.log(2 * m * Tq / nu1)))
        ints = (sch.T == T and sch.T_tilde == Tt
                and sample_size_hoeffding(prob, cfg, Tq) == kh
                and sample_size_bennett(prob, cfg, Tq, s2) == kbn)
        rel = max(abs(sch.c_x / c_x - 1), max(abs(a / b - 1) for a, b in zip(sch.c_p, c_p)),
                  abs(sch.kappa_bullet / kb - 1), abs(sch.kappa_circ / kc - 1))
        worst = max(worst, rel)
        ints_ok += ints
        floats_ok += rel <= 1e-12
    report(11, ints_ok == 50 and floats_ok == 50,
           f"50 tuples: integer results equal on {ints_ok}/50; step and kappa constants within 1e-12 "
           f"on {floats_ok}/50 (max rel {worst:.1e})")


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_c") and callable(fn):
            try:
                fn()
            except AssertionError:
                failed += 1
    print("\n".join(["", *LINES]))
    sys.exit(1 if failed else 0)
