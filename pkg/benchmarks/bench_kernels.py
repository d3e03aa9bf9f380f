"""Compare the compiled kernels with the pure-Python fallback.

Micro-benchmarks call each kernel directly from both modules. The
end-to-end benchmark runs the sampled solver in a child process once per
backend (``DRF_PURE_PYTHON=1`` selects the fallback) and reports the mean
time per iteration.

    python benchmarks/bench_kernels.py [--n 100000] [--iters 2000]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from drfsolve import _pykernels as pure

try:
    from drfsolve import _ckernels as compiled
except ImportError:
    compiled = None


def micro(mod, n: int, reps: int) -> dict[str, float]:
    rng = np.random.default_rng(0)
    vals = rng.random(n)
    tree = mod.fenwick_build(vals)
    total = float(vals.sum())
    targets = rng.random(100) * total
    out = np.empty(100, dtype=np.intp)
    idx = rng.integers(0, n, reps)
    beta, gamma = 1.0, 1.0 / n
    p_old = 1.0 / n
    res = {}

    def run(name, fn, number):
        res[name] = min(timeit.repeat(fn, number=number, repeat=3)) / number * 1e6

    run("fenwick_build", lambda: mod.fenwick_build(vals), 5)
    it = iter(np.tile(idx, 50))
    run("fenwick_add", lambda: mod.fenwick_add(tree, int(next(it)), 1e-9), reps)
    run("fenwick_prefix", lambda: mod.fenwick_prefix(tree, n // 2), reps)
    run("fenwick_search", lambda: mod.fenwick_search(tree, 0.37 * total, 1.0, 0.0), reps)
    run("fenwick_search_many(100)", lambda: mod.fenwick_search_many(tree, targets, 1.0, 0.0, out), 200)
    run("alpha_star", lambda: mod.alpha_star(n, 5.0, 0.9, beta, gamma, p_old, p_old + 5.0 / n,
                                             1e-12, 1e-15), reps)
    return res


CHILD = """
import json, sys, time
from drfsolve import BACKEND
from drfsolve.meta import SolverConfig, run_feasibility
from drfsolve.problems import build_param_select, gen_param_select
n, iters = int(sys.argv[1]), int(sys.argv[2])
prob = build_param_select(gen_param_select(10, 15, 3, n, 0.01, 0))
stamps = []
cfg = SolverConfig(epsilon=0.05, k=100, w_scale_override=1.0, max_iters_override=iters + 1)
run_feasibility(prob, cfg, monitor=lambda *a: stamps.append(time.perf_counter()))
print(json.dumps({"backend": BACKEND, "us": (stamps[-1] - stamps[0]) / (len(stamps) - 1) * 1e6}))
"""


def end_to_end(pure_python: bool, n: int, iters: int) -> dict:
    env = dict(os.environ)
    env["DRF_PURE_PYTHON"] = "1" if pure_python else "0"
    proc = subprocess.run([sys.executable, "-c", CHILD, str(n), str(iters)], env=env,
                          capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000, help="vector length for the kernels")
    ap.add_argument("--reps", type=int, default=20_000, help="calls per timing")
    ap.add_argument("--iters", type=int, default=2000, help="solver iterations end to end")
    ap.add_argument("--solver-n", type=int, default=10_000, help="scenario count end to end")
    args = ap.parse_args(argv)

    py = micro(pure, args.n, args.reps)
    cy = micro(compiled, args.n, args.reps) if compiled is not None else {}
    print(f"kernel timings at n={args.n} (microseconds per call)")
    print(f"{'kernel':28s}{'compiled':>12s}{'python':>12s}{'speedup':>10s}")
    for name, t_py in py.items():
        t_cy = cy.get(name, float("nan"))
        print(f"{name:28s}{t_cy:12.3f}{t_py:12.3f}{t_py / t_cy:10.1f}")

    print(f"\nsampled solver on param-select, n={args.solver_n}, {args.iters} iterations")
    for flag in (False, True):
        r = end_to_end(flag, args.solver_n, args.iters)
        print(f"  {r['backend']:9s} {r['us']:9.1f} us/iteration")
    if compiled is None:
        print("compiled extension not built; only the fallback was timed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
