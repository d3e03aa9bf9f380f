"""Compiled and pure kernels against each other and against plain numpy."""
import numpy as np
import pytest

from drfsolve import _kernels
from drfsolve._kernels import pure
from drfsolve.ambiguity import Chi2Set, project

try:
    from drfsolve import _ckernels as compiled
except ImportError:  # pragma: no cover
    compiled = None

BACKENDS = [pure] + ([compiled] if compiled is not None else [])
IDS = ["python"] + (["compiled"] if compiled is not None else [])


@pytest.fixture(params=BACKENDS, ids=IDS)
def kern(request):
    return request.param


def test_backend_flag():
    assert _kernels.BACKEND in ("compiled", "python")


def test_fenwick_prefix_matches_cumsum(kern, rng):
    v = rng.random(37)
    tree = kern.fenwick_build(v)
    cs = np.cumsum(v)
    for k in range(1, 38):
        assert kern.fenwick_prefix(tree, k) == pytest.approx(cs[k - 1], abs=1e-13)
    assert kern.fenwick_prefix(tree, 0) == 0.0


def test_fenwick_add(kern, rng):
    v = rng.random(20)
    tree = kern.fenwick_build(v)
    for _ in range(50):
        i = int(rng.integers(20))
        d = float(rng.normal())
        kern.fenwick_add(tree, i, d)
        v[i] += d
    np.testing.assert_allclose([kern.fenwick_prefix(tree, k) for k in range(1, 21)],
                               np.cumsum(v), atol=1e-12)


def test_fenwick_search_affine(kern, rng):
    # p = a*stored + b; the search must return the first r with prefix_p(r+1) > target
    stored = rng.random(16)
    a, b = 0.7, 0.01
    p = a * stored + b
    cs = np.cumsum(p)
    tree = kern.fenwick_build(stored)
    targets = rng.random(200) * cs[-1]
    expect = np.searchsorted(cs, targets, side="right")
    got = [kern.fenwick_search(tree, t, a, b) for t in targets]
    np.testing.assert_array_equal(got, expect)
    out = np.empty(200, dtype=np.int64)
    kern.fenwick_search_many(tree, np.ascontiguousarray(targets), a, b, out)
    np.testing.assert_array_equal(out, expect)


def test_fenwick_search_clamps_top(kern):
    tree = kern.fenwick_build(np.full(5, 0.2))
    assert kern.fenwick_search(tree, 1.0 + 1e-12, 1.0, 0.0) == 4


@pytest.mark.skipif(compiled is None, reason="compiled extension not built")
def test_backends_agree_on_alpha_star(rng):
    for _ in range(300):
        n = int(rng.integers(2, 50))
        rho = rng.uniform(0.01, n / 2)
        delta = rng.uniform(0, 0.99)
        s = Chi2Set(n, rho, delta)
        p = project(s, rng.random(n) * 2 / n)
        r = int(rng.integers(n))
        w = p[r] + rng.normal() * 3 / n
        args = (n, rho, delta, float(p.sum()), float(p @ p), float(p[r]), float(w),
                1e-10 * rho / n**2, 1e-12)
        a1, _ = pure.alpha_star(*args)
        a2, _ = compiled.alpha_star(*args)
        assert a1 == pytest.approx(a2, abs=1e-12)


def test_alpha_star_matches_dense_projection(kern, rng):
    # one-coordinate change of a member; the dense solver is the reference
    for _ in range(300):
        n = int(rng.integers(2, 30))
        rho = rng.uniform(0.01, n / 2)
        delta = rng.uniform(0, 0.99)
        s = Chi2Set(n, rho, delta)
        p = project(s, rng.random(n) * 2 / n)
        r = int(rng.integers(n))
        w = p.copy()
        w[r] = p[r] + rng.normal() * 3 / n
        alpha, _ = kern.alpha_star(n, rho, delta, float(p.sum()), float(p @ p), float(p[r]),
                                   float(w[r]), 1e-10 * rho / n**2, 1e-12)
        got = np.maximum(delta / n, (1 - alpha) * w + alpha / n)
        np.testing.assert_allclose(got, project(s, w), atol=1e-10)
