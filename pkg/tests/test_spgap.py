import numpy as np
import pytest

from drfsolve.ambiguity import Chi2Set, project
from drfsolve.core import DrfProblem, phi
from drfsolve.mirror import EntropySimplex, EuclideanBall
from drfsolve.problems import LinearOracle
from drfsolve.spgap import inf_over_x, sp_gap, sup_over_p

from oracles import sup_oracle


def linear(A, b, domain):
    A = [np.asarray(a, dtype=float) for a in A]
    b = [np.asarray(v, dtype=float) for v in b]
    n, d = A[0].shape
    G = max(float(np.linalg.norm(a, axis=1).max()) for a in A)
    if isinstance(domain, EntropySimplex):
        G = max(float(np.abs(a).max()) for a in A)
    M = [float(np.max(np.abs(a).sum(axis=1) * 2 + np.abs(v))) for a, v in zip(A, b)]
    return DrfProblem(LinearOracle(A, b), len(A), n, d, G, M, domain)


def test_sup_zero():
    prob = linear([np.zeros((4, 2))] * 2, [np.zeros(4)] * 2, EuclideanBall(2, 1.0))
    val, k, ps = sup_over_p(prob, Chi2Set(4, 1.0, 0.5), np.zeros(2))
    assert val == 0.0 and len(ps) == 2


def test_sup_dominance(rng):
    base = rng.normal(size=5)
    prob = linear([np.zeros((5, 2))] * 2, [base - 1.0, base + 1.0], EuclideanBall(2, 1.0))
    _, k, _ = sup_over_p(prob, Chi2Set(5, 1.0, 0.5), np.zeros(2))
    assert k == 1


def test_sup_against_oracle(rng):
    A = [rng.normal(size=(3, 2)) for _ in range(2)]
    b = [rng.normal(size=3) for _ in range(2)]
    prob = linear(A, b, EuclideanBall(2, 1.0))
    s = Chi2Set(3, 0.6, 0.3)
    x = np.array([0.3, -0.5])
    val, _, _ = sup_over_p(prob, s, x)
    ref = max(sup_oracle(3, 0.6, 0.3, A[i] @ x + b[i]) for i in range(2))
    assert val == pytest.approx(ref, abs=1e-4)


def test_inf_constant_objective(rng):
    prob = linear([np.zeros((4, 2))] * 2, [np.full(4, 0.3), np.full(4, -0.2)], EuclideanBall(2, 1.0))
    ps = [rng.random(4), rng.random(4)]
    val, _ = inf_over_x(prob, ps, 1)
    assert val == pytest.approx(max(ps[0].sum() * 0.3, ps[1].sum() * -0.2))


def test_inf_simplex_linear(rng):
    n, d = 6, 5
    A = rng.normal(size=(n, d))
    prob = linear([A], [np.zeros(n)], EntropySimplex(d))
    p = rng.random(n) / n
    val, x = inf_over_x(prob, [p], 10_000)
    assert val == pytest.approx(float(np.min(p @ A)), abs=1e-3)


def test_inf_ball_linear(rng):
    n, d, R = 6, 3, 2.0
    A = rng.normal(size=(n, d))
    b = rng.normal(size=n)
    prob = linear([A], [b], EuclideanBall(d, R))
    p = rng.random(n) / n
    val, _ = inf_over_x(prob, [p], 10_000)
    assert val == pytest.approx(p @ b - R * np.linalg.norm(p @ A), abs=1e-3)


def test_inf_non_increasing_in_budget(rng):
    A = [rng.normal(size=(5, 3)) for _ in range(3)]
    b = [rng.normal(size=5) for _ in range(3)]
    prob = linear(A, b, EuclideanBall(3, 1.0))
    ps = [rng.random(5) / 5 for _ in range(3)]
    vals = [inf_over_x(prob, ps, k)[0] for k in (1, 4, 16, 64, 256, 1024)]
    assert np.all(np.diff(vals) <= 0)


def test_gap_zero_when_values_vanish():
    prob = linear([np.zeros((4, 2))], [np.zeros(4)], EuclideanBall(2, 1.0))
    rep = sp_gap(prob, Chi2Set(4, 1.0, 0.5), np.zeros(2), [np.full(4, 0.25)])
    assert rep.gap == 0.0


def test_gap_non_negative(rng):
    s = Chi2Set(6, 2.0, 0.5)
    for _ in range(20):
        A = [rng.normal(size=(6, 3)) for _ in range(2)]
        b = [rng.normal(size=6) for _ in range(2)]
        prob = linear(A, b, EuclideanBall(3, 1.0))
        x = prob.domain.sample(rng)
        ps = [project(s, rng.random(6) / 3) for _ in range(2)]
        rep = sp_gap(prob, s, x, ps, 500)
        assert rep.gap >= -1e-6
        assert rep.sup_value >= rep.phi_at_pair - 1e-9
        assert rep.phi_at_pair == pytest.approx(phi(prob, x, ps))
        assert rep.inf_value <= rep.phi_at_pair + 1e-12


def test_gap_against_double_grid(rng):
    # d=2, n=3, m=2 on the unit ball; outer sup by the oracle, inner inf by a polar grid
    A = [rng.normal(size=(3, 2)) for _ in range(2)]
    b = [rng.normal(size=3) * 0.3 for _ in range(2)]
    prob = linear(A, b, EuclideanBall(2, 1.0))
    s = Chi2Set(3, 0.6, 0.3)
    x_bar = np.array([0.2, 0.1])
    p_bar = [project(s, rng.random(3) / 2) for _ in range(2)]
    sup_ref = max(sup_oracle(3, 0.6, 0.3, A[i] @ x_bar + b[i]) for i in range(2))
    r = np.sqrt(np.linspace(0, 1, 401))
    th = np.linspace(0, 2 * np.pi, 1441)
    R, T = np.meshgrid(r, th)
    X = np.stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()], axis=1)
    vals = np.max([X @ (p_bar[i] @ A[i]) + p_bar[i] @ b[i] for i in range(2)], axis=0)
    inf_ref = float(vals.min())
    rep = sp_gap(prob, s, x_bar, p_bar, 5000)
    assert rep.gap == pytest.approx(sup_ref - inf_ref, abs=2e-3)
