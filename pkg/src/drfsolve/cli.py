"""Command-line interface: ``drfsolve solve|optimize|gen-data``.

Exit codes: 0 feasible (or success), 2 infeasible, 1 error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import problems as P
from .core import Certificate, DrfError, DrfProblem
from .meta import SolverConfig, Trace, optimize_binary_search, run_feasibility

log = logging.getLogger("drfsolve")

EXIT_FEASIBLE, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2

SOLVER_KEYS = {
    "epsilon": "epsilon",
    "c_k": "c_k",
    "k": "k",
    "nu0": "nu0",
    "nu1": "nu1",
    "mode": "mode",
    "sp_gap_every": "sp_gap_every",
    "c_s_override": "w_scale_override",
    "omega_override": "omega_override",
    "rho": "rho",
    "delta": "delta",
    "cg_override": "cg_override",
    "feasibility_test": "feasibility_test",
    "seed": "seed",
    "inner_min_budget": "inner_min_budget",
    "max_iters": "max_iters_override",
    "sampler": "sampler",
}
OTHER_KEYS = {"problem", "objective"}


class CliError(DrfError):
    pass


def _default_delta(ptype: str) -> float:
    return 0.95 if ptype == "fairness-lr" else 0.9


def load_config(path, seed=None, threads=1) -> tuple[SolverConfig, dict]:
    """Parse a JSON config; returns the solver config and the resolved document."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CliError(f"config {path} is not valid JSON: {exc}") from None
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise CliError("config must be a JSON object")
    for key in doc:
        if key not in SOLVER_KEYS and key not in OTHER_KEYS:
            raise CliError(f"invalid config key '{key}': unknown key")
    if "epsilon" not in doc:
        raise CliError("invalid config key 'epsilon': required")
    prob = doc.get("problem")
    if not isinstance(prob, dict) or "type" not in prob:
        raise CliError("invalid config key 'problem': must be an object with a 'type'")
    kwargs = {SOLVER_KEYS[k]: v for k, v in doc.items() if k in SOLVER_KEYS}
    kwargs.setdefault("delta", _default_delta(prob["type"]))
    if seed is not None:
        kwargs["seed"] = int(seed)
    kwargs["threads"] = int(threads)
    cfg = SolverConfig(**kwargs)
    resolved = {k: getattr(cfg, attr) for k, attr in SOLVER_KEYS.items()}
    resolved["problem"] = prob
    if "objective" in doc:
        resolved["objective"] = doc["objective"]
    return cfg, resolved


def _param(prob: dict, key, default=None, cast=float):
    if key in prob:
        try:
            return cast(prob[key])
        except (TypeError, ValueError):
            raise CliError(f"invalid config key 'problem.{key}': {prob[key]!r}") from None
    if default is None:
        raise CliError(f"invalid config key 'problem.{key}': required")
    return default


def build_problem(prob: dict):
    """Return ``(problem or None, family or None)`` for a problem section."""
    ptype = prob["type"]
    if ptype == "toy-infeasible":
        return P.toy_infeasible(_param(prob, "m", 2, int), _param(prob, "n", 50, int),
                                _param(prob, "d", 3, int), _param(prob, "value", 0.5)), None
    if ptype == "toy-feasible":
        return P.toy_feasible(_param(prob, "n", 50, int), _param(prob, "d", 3, int),
                              _param(prob, "seed", 0, int)), None
    if ptype == "toy-simplex":
        rng = np.random.default_rng(_param(prob, "seed", 0, int))
        costs = rng.random((_param(prob, "n", 20, int), _param(prob, "L", 4, int)))
        family = lambda c: P.toy_simplex_objective(costs, c)  # noqa: E731
        thr = prob.get("threshold")
        return (family(float(thr)) if thr is not None else None), family
    if ptype == "param-select":
        if "path" in prob:
            spec = P.load_param_select(prob["path"])
        else:
            spec = P.gen_param_select(_param(prob, "J", 5, int), _param(prob, "L", 10, int),
                                      _param(prob, "m", 3, int), _param(prob, "n", 2000, int),
                                      _param(prob, "sigma_sq", 0.01), _param(prob, "seed", 0, int))
        return P.build_param_select(spec), None
    if ptype == "newsvendor":
        if "path" in prob:
            spec = P.load_newsvendor(prob["path"])
        else:
            spec = P.gen_newsvendor(_param(prob, "d", 10, int), _param(prob, "n", 5000, int),
                                    _param(prob, "seed", 0, int),
                                    cvar_margin=_param(prob, "cvar_margin", 0.0))
        family, cvar = P.build_newsvendor(spec)
        thr = prob.get("threshold")
        return (family(float(thr)) if thr is not None else cvar), family
    if ptype == "fairness-lr":
        cov = _param(prob, "cov_bound", 0.05)
        if "path" in prob:
            schema_ref = prob.get("schema", "adult")
            schema = P.ADULT_SCHEMA if schema_ref == "adult" else P.DatasetSchema.from_json(schema_ref)
            if "degree" in prob:
                schema = P.DatasetSchema(**{**schema.__dict__, "degree": int(prob["degree"])})
            X, y, z = P.load_csv_dataset(prob["path"], schema)
            spec = P.fairness_spec_from_data(X, y, z, cov)
        else:
            spec = P.gen_fairness_lr(_param(prob, "n", 5000, int), _param(prob, "d", 50, int),
                                     _param(prob, "seed", 0, int), cov)
        return P.build_fairness_lr(spec), None
    raise CliError(f"invalid config key 'problem.type': unknown problem {ptype!r}")


def _write_trace(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "sp_gap", "phi_value", "elapsed_s"])
        for r in rows:
            w.writerow([r[0], repr(float(r[1])), repr(float(r[2])), f"{r[3]:.6f}"])


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _status(cert: Certificate) -> str:
    return "feasible" if cert.feasible else "infeasible"


def _read_warm(path, problem: DrfProblem):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    meta = doc.get("meta", {})
    for key, want in (("n", problem.n), ("m", problem.m), ("d", problem.d)):
        if key in meta and int(meta[key]) != want:
            raise CliError(f"warm start was saved for {key}={meta[key]}, problem has {key}={want}")
    return np.array(doc["x"], dtype=float), [np.array(p, dtype=float) for p in doc["p"]]


def _write_warm(path, cert: Certificate, problem: DrfProblem, cfg: SolverConfig):
    _write_json(path, {
        "x": cert.x_bar.tolist(),
        "p": [p.tolist() for p in cert.p_bar],
        "meta": {"n": problem.n, "m": problem.m, "d": problem.d, "rho": cfg.rho,
                 "delta": cfg.delta},
    })


def cmd_solve(args) -> int:
    cfg, resolved = load_config(args.config, args.seed, args.threads)
    problem, _ = build_problem(resolved["problem"])
    if problem is None:
        raise CliError("invalid config key 'problem.threshold': required for this problem type")
    warm = _read_warm(args.warm_in, problem) if args.warm_in else None
    start = time.monotonic()
    cert, trace = run_feasibility(problem, cfg, warm)
    wall = time.monotonic() - start
    result = {
        "status": _status(cert),
        "x_bar": cert.x_bar.tolist(),
        "iterations": trace.iterations,
        "wall_time_s": wall,
        "final_sp_gap": trace.final_sp_gap,
        "seconds_per_iteration": wall / max(trace.iterations, 1),
        "seed": cfg.seed,
        "certificate_source": cert.source.value,
        "statistic": cert.statistic,
        "threshold": cert.threshold,
        "config_echo": resolved,
    }
    out = args.out or "result.json"
    _write_json(out, result)
    if args.trace:
        _write_trace(args.trace, [(c.t, c.sp_gap, c.phi_value, c.elapsed_s) for c in trace.checkpoints])
    if args.warm_out:
        _write_warm(args.warm_out, cert, problem, cfg)
    print(f"{result['status']} after {trace.iterations} iterations ({cert.source.value})")
    return EXIT_FEASIBLE if cert.feasible else EXIT_INFEASIBLE


def cmd_optimize(args) -> int:
    cfg, resolved = load_config(args.config, args.seed, args.threads)
    _, family = build_problem(resolved["problem"])
    if family is None:
        raise CliError("invalid config key 'problem.type': no objective family for this problem")
    obj = resolved.get("objective")
    if not isinstance(obj, dict):
        raise CliError("invalid config key 'objective': required with lo, hi and tol")
    lo, hi = _param(obj, "lo"), _param(obj, "hi")
    tol = _param(obj, "tol", 1e-2)
    warm_start = bool(obj.get("warm_start", True)) and not args.no_warm_start
    resolved["objective"] = {**obj, "tol": tol, "warm_start": warm_start}
    start = time.monotonic()
    if lo == hi:
        cert, trace = run_feasibility(family(hi), cfg)
        stages = [(hi, cert, trace)]
        value = hi if cert.feasible else None
        x = cert.x_bar
    elif lo > hi:
        raise CliError(f"invalid config key 'objective': lo={lo} exceeds hi={hi}")
    else:
        res = optimize_binary_search(family, cfg, lo, hi, tol, warm_start=warm_start)
        stages, value, x = res.stages, res.value, res.x
    wall = time.monotonic() - start
    total = sum(tr.iterations for _, _, tr in stages)
    result = {
        "value": value,
        "x": x.tolist(),
        "stages": [{"threshold": c, "status": _status(cert), "iterations": tr.iterations,
                    "wall_time_s": tr.wall_time_s, "final_sp_gap": tr.final_sp_gap,
                    "certificate_source": cert.source.value} for c, cert, tr in stages],
        "total_iterations": total,
        "wall_time_s": wall,
        "seconds_per_iteration": wall / max(total, 1),
        "seed": cfg.seed,
        "config_echo": resolved,
    }
    _write_json(args.out or "result.json", result)
    if args.trace:
        rows, offset, clock = [], 0, 0.0
        for _, _, tr in stages:
            rows += [(offset + c.t, c.sp_gap, c.phi_value, clock + c.elapsed_s) for c in tr.checkpoints]
            offset += tr.iterations
            clock += tr.wall_time_s
        _write_trace(args.trace, rows)
    print(f"value {value} after {len(stages)} stages, {total} iterations")
    return EXIT_FEASIBLE if value is not None else EXIT_INFEASIBLE


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    if args.problem == "newsvendor":
        spec = P.gen_newsvendor(args.d, args.n, args.seed)
        files = P.save_newsvendor(spec, out)
    elif args.problem == "param-select":
        spec = P.gen_param_select(args.J, args.L, args.m, args.n, args.sigma_sq, args.seed)
        files = P.save_param_select(spec, out)
    elif args.problem == "fairness-lr":
        spec = P.gen_fairness_lr(args.n, args.d, args.seed)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "data.csv"
        names = [f"f{j}" for j in range(spec.features.shape[1])]
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names + ["label", "sensitive"])
            for row, y, z in zip(spec.features, spec.labels, spec.sensitive):
                w.writerow([repr(float(v)) for v in row] + [int(y), repr(float(z))])
        schema = out / "schema.json"
        _write_json(schema, {"label": "label", "sensitive": "sensitive", "continuous": names,
                             "degree": 1})
        files = [path, schema]
    else:
        raise CliError(f"unknown problem {args.problem!r}")
    for f in files:
        print(f)
    return EXIT_FEASIBLE


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="drfsolve", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("solve", "run one feasibility problem"),
                           ("optimize", "bisect on an objective threshold")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config", help="JSON config file")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default=None, help="result JSON path (default result.json)")
        sp.add_argument("--trace", default=None, help="write checkpoint trace CSV here")
        sp.add_argument("--threads", type=int, default=1, help="worker threads per iteration")
        if name == "solve":
            sp.add_argument("--warm-in", default=None, help="warm-start JSON to start from")
            sp.add_argument("--warm-out", default=None, help="save the averages as warm-start JSON")
        else:
            sp.add_argument("--no-warm-start", action="store_true",
                            help="start every stage from the default point")
    g = sub.add_parser("gen-data", help="write a synthetic dataset")
    g.add_argument("problem", help="newsvendor | param-select | fairness-lr")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n", type=int, default=5000)
    g.add_argument("--d", type=int, default=10)
    g.add_argument("--J", type=int, default=10)
    g.add_argument("--L", type=int, default=25)
    g.add_argument("--m", type=int, default=5)
    g.add_argument("--sigma-sq", type=float, default=0.01)
    return ap


def main(argv=None) -> int:
    level = os.environ.get("DRF_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = make_parser().parse_args(argv)
    handlers = {"solve": cmd_solve, "optimize": cmd_optimize, "gen-data": cmd_gen_data}
    try:
        return handlers[args.command](args)
    except (DrfError, OSError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
