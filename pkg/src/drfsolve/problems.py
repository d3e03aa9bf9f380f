"""Benchmark problems, synthetic generators and CSV ingestion.

Three families are provided: fairness-constrained logistic regression over
a Euclidean ball, parameter selection over a product of simplices with
linear scenario functions, and a multi-item newsvendor with a CVaR
constraint over a budget set with an auxiliary scalar. Small toy instances
used for testing live here too.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .core import BoundsError, ConfigError, ConstraintOracle, DrfProblem, validate_problem
from .mirror import BudgetBox, EuclideanBall, ProductOfSimplices

__all__ = [
    "LinearOracle",
    "toy_infeasible",
    "toy_feasible",
    "toy_simplex_objective",
    "FairnessLrSpec",
    "FairnessOracle",
    "build_fairness_lr",
    "fairness_spec_from_data",
    "gen_fairness_lr",
    "DatasetSchema",
    "ADULT_SCHEMA",
    "polynomial_features",
    "load_csv_dataset",
    "ParamSelectSpec",
    "gen_param_select",
    "build_param_select",
    "NewsvendorSpec",
    "NewsvendorOracle",
    "newsvendor_loss",
    "gen_newsvendor",
    "build_newsvendor",
    "save_newsvendor",
    "load_newsvendor",
    "save_param_select",
    "load_param_select",
]


# ---------------------------------------------------------------------------
# linear scenario functions

class LinearOracle(ConstraintOracle):
    """``F^i_r(x) = A[i][r] . x + b[i][r]``."""

    def __init__(self, A, b):
        self.A = [np.ascontiguousarray(a, dtype=float) for a in A]
        self.b = [np.ascontiguousarray(v, dtype=float) for v in b]
        self.m = len(self.A)
        self.n, self.d = self.A[0].shape
        for a, v in zip(self.A, self.b):
            if a.shape != (self.n, self.d) or v.shape != (self.n,):
                raise ConfigError("inconsistent shapes in linear scenario data")

    def value(self, i, r, x):
        return float(self.A[i][r] @ x + self.b[i][r])

    def subgradient(self, i, r, x):
        return self.A[i][r].copy()

    def values(self, i, x):
        return self.A[i] @ x + self.b[i]

    def values_at(self, i, idx, x):
        return self.A[i][idx] @ x + self.b[i][idx]

    def weighted_subgradient(self, i, w, x):
        return w @ self.A[i]

    def weighted(self, i, w):
        w = np.asarray(w, dtype=float)
        a = w @ self.A[i]
        c = float(w @ self.b[i])
        return lambda x: (float(a @ x) + c, a)


def toy_infeasible(m: int = 2, n: int = 50, d: int = 3, value: float = 0.5) -> DrfProblem:
    """Every scenario function is the constant ``value``; infeasible for ``value > 0``."""
    A = [np.zeros((n, d)) for _ in range(m)]
    b = [np.full(n, value) for _ in range(m)]
    return DrfProblem(LinearOracle(A, b), m, n, d, 0.0, np.full(m, abs(value)),
                      EuclideanBall(d, 1.0), name="toy-infeasible")


def toy_feasible(n: int = 50, d: int = 3, seed: int = 0) -> DrfProblem:
    """``F_r(x) = a_r . x - 1`` with ``||a_r|| <= 1`` on the unit ball; ``x = 0`` is feasible."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, d))
    a /= np.maximum(np.linalg.norm(a, axis=1, keepdims=True), 1.0)
    a *= rng.random((n, 1))
    return DrfProblem(LinearOracle([a], [np.full(n, -1.0)]), 1, n, d, 1.0, np.array([2.0]),
                      EuclideanBall(d, 1.0), name="toy-feasible")


def toy_simplex_objective(costs, threshold: float) -> DrfProblem:
    """``F_r(x) = costs[r] . x - threshold`` over a single simplex (``n x L`` costs)."""
    costs = np.asarray(costs, dtype=float)
    n, L = costs.shape
    dom = ProductOfSimplices(1, L)
    G = float(np.max(np.abs(costs)))
    M = float(np.max(np.abs(costs)) + abs(threshold))
    return DrfProblem(LinearOracle([costs], [np.full(n, -threshold)]), 1, n, L, G,
                      np.array([M]), dom, name="toy-simplex")


# ---------------------------------------------------------------------------
# fairness-constrained logistic regression

@dataclass
class FairnessLrSpec:
    features: np.ndarray
    labels: np.ndarray
    sensitive: np.ndarray
    cov_bound: float = 0.05
    loss_rhs: float = 0.5
    radius: float | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        self.sensitive = np.asarray(self.sensitive, dtype=float)
        n, d = self.features.shape
        if self.labels.shape != (n,) or self.sensitive.shape != (n,):
            raise ConfigError("features, labels and sensitive values disagree in length")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.sensitive))):
            raise ConfigError("fairness data contains non-finite values")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise ConfigError("labels must be 0 or 1")
        if self.radius is None:
            self.radius = 5.0 * math.log(d) if d > 1 else 1.0


class FairnessOracle(ConstraintOracle):
    """Loss, positive covariance and negative covariance constraints (m = 3)."""

    def __init__(self, spec: FairnessLrSpec):
        self.X = np.ascontiguousarray(spec.features)
        self.y = spec.labels
        self.zc = spec.sensitive - spec.sensitive.mean()
        self.c = float(spec.cov_bound)
        self.rhs = float(spec.loss_rhs)
        self.n, self.d = self.X.shape
        self.m = 3
        self._zX = self.zc[:, None] * self.X

    def _from_scores(self, i, s, y, zc):
        if i == 0:
            return np.logaddexp(0.0, s) - y * s - self.rhs
        sign = 1.0 if i == 1 else -1.0
        return sign * zc * s - self.c

    def value(self, i, r, x):
        s = float(self.X[r] @ x)
        return float(self._from_scores(i, np.array(s), self.y[r], self.zc[r]))

    def values(self, i, x):
        return self._from_scores(i, self.X @ x, self.y, self.zc)

    def values_at(self, i, idx, x):
        return self._from_scores(i, self.X[idx] @ x, self.y[idx], self.zc[idx])

    def subgradient(self, i, r, x):
        if i == 0:
            s = float(self.X[r] @ x)
            return (_sigmoid(s) - self.y[r]) * self.X[r]
        return (1.0 if i == 1 else -1.0) * self._zX[r]

    def weighted_subgradient(self, i, w, x):
        if i == 0:
            return (w * (_sigmoid(self.X @ x) - self.y)) @ self.X
        return (1.0 if i == 1 else -1.0) * (w @ self._zX)

    def weighted(self, i, w):
        w = np.asarray(w, dtype=float)
        if i == 0:
            return lambda x: (float(w @ self.values(0, x)), self.weighted_subgradient(0, w, x))
        a = (1.0 if i == 1 else -1.0) * (w @ self._zX)
        c = -self.c * float(w.sum())
        return lambda x: (float(a @ x) + c, a)


def _sigmoid(s):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(s)))


FAIRNESS_BOUND = 0.25


def build_fairness_lr(spec: FairnessLrSpec, validate: bool = True) -> DrfProblem:
    """Ball of radius ``5 ln d`` with ``G = M^i = 0.25``; validates the bounds."""
    n, d = spec.features.shape
    prob = DrfProblem(FairnessOracle(spec), 3, n, d, FAIRNESS_BOUND,
                      np.full(3, FAIRNESS_BOUND), EuclideanBall(d, spec.radius), name="fairness-lr")
    if validate:
        issues = validate_problem(prob)
        if issues:
            raise BoundsError(f"{issues[0]} ({len(issues)} violations); rescale the features "
                              "(see fairness_spec_from_data)")
    return prob


def fairness_spec_from_data(features, labels, sensitive, cov_bound: float = 0.05,
                            loss_rhs: float = 0.5, shrink: float = 0.8,
                            max_rounds: int = 200) -> FairnessLrSpec:
    """Globally rescale features until the declared 0.25 bounds validate.

    The starting scale makes the gradient bound hold exactly; it is then
    shrunk geometrically until the magnitude spot-check passes.
    """
    X = np.asarray(features, dtype=float)
    z = np.asarray(sensitive, dtype=float)
    zc = np.abs(z - z.mean())
    row = np.linalg.norm(X, axis=1) * np.maximum(1.0, zc)
    top = float(row.max()) if row.size else 0.0
    scale = 0.9 * FAIRNESS_BOUND / top if top > 0 else 1.0
    for _ in range(max_rounds):
        spec = FairnessLrSpec(X * scale, labels, sensitive, cov_bound, loss_rhs)
        try:
            build_fairness_lr(spec)
            return spec
        except BoundsError:
            scale *= shrink
    raise BoundsError("could not find a feature scaling satisfying the 0.25 bounds")


def gen_fairness_lr(n: int, d: int, seed: int, cov_bound: float = 0.05) -> FairnessLrSpec:
    """Synthetic classification data with a binary sensitive attribute."""
    rng = np.random.default_rng(seed)
    z = (rng.random(n) < 0.4).astype(float)
    X = rng.standard_normal((n, d))
    X[:, 0] += 0.8 * (z - z.mean())
    w = rng.standard_normal(d) / math.sqrt(d)
    logits = 2.0 * (X @ w) + 0.5 * (z - 0.5)
    y = (rng.random(n) < _sigmoid(logits)).astype(float)
    return fairness_spec_from_data(X, y, z, cov_bound)


@dataclass
class DatasetSchema:
    """Column roles for :func:`load_csv_dataset`.

    Continuous columns are min-max scaled then expanded to all monomials of
    degree ``<= degree``. Categorical columns are one-hot encoded against
    the listed levels with the first level dropped; unlisted values encode
    as all zeros.
    """

    label: str
    sensitive: str
    continuous: list[str]
    categorical: dict[str, list[str]] = field(default_factory=dict)
    positive_label: str | None = None
    sensitive_map: dict[str, float] | None = None
    degree: int = 1

    def feature_dim(self) -> int:
        k = len(self.continuous)
        poly = math.comb(k + self.degree, self.degree) - 1 if k else 0
        return poly + sum(len(v) - 1 for v in self.categorical.values())

    @classmethod
    def from_json(cls, path) -> "DatasetSchema":
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))


_ADULT_LEVELS = {
    "workclass": ["Private", "Self-emp-not-inc", "Self-emp-inc", "Federal-gov", "Local-gov",
                  "State-gov", "Without-pay", "Never-worked"],
    "education": ["Bachelors", "Some-college", "11th", "HS-grad", "Prof-school", "Assoc-acdm",
                  "Assoc-voc", "9th", "7th-8th", "12th", "Masters", "1st-4th", "10th",
                  "Doctorate", "5th-6th", "Preschool"],
    "marital-status": ["Married-civ-spouse", "Divorced", "Never-married", "Separated", "Widowed",
                       "Married-spouse-absent", "Married-AF-spouse"],
    "occupation": ["Tech-support", "Craft-repair", "Other-service", "Sales", "Exec-managerial",
                   "Prof-specialty", "Handlers-cleaners", "Machine-op-inspct", "Adm-clerical",
                   "Farming-fishing", "Transport-moving", "Priv-house-serv", "Protective-serv",
                   "Armed-Forces"],
    "relationship": ["Wife", "Own-child", "Husband", "Not-in-family", "Other-relative",
                     "Unmarried"],
    "race": ["White", "Asian-Pac-Islander", "Amer-Indian-Eskimo", "Other", "Black"],
    "sex": ["Female", "Male"],
    "native-country": ["United-States", "Cambodia", "England", "Puerto-Rico", "Canada", "Germany",
                       "Outlying-US(Guam-USVI-etc)", "India", "Japan", "Greece", "South", "China",
                       "Cuba", "Iran", "Honduras", "Philippines", "Italy", "Poland", "Jamaica",
                       "Vietnam", "Mexico", "Portugal", "Ireland", "France",
                       "Dominican-Republic", "Laos", "Ecuador", "Taiwan", "Haiti", "Columbia",
                       "Hungary", "Guatemala", "Nicaragua", "Scotland", "Thailand", "Yugoslavia",
                       "El-Salvador", "Trinadad&Tobago", "Peru", "Hong", "Holand-Netherlands"],
}

ADULT_SCHEMA = DatasetSchema(
    label="income",
    positive_label=">50K",
    sensitive="sex",
    sensitive_map={"Male": 1.0, "Female": 0.0},
    continuous=["age", "fnlwgt", "education-num", "capital-gain", "capital-loss",
                "hours-per-week"],
    categorical=_ADULT_LEVELS,
    degree=3,
)


def polynomial_features(cont: np.ndarray, degree: int) -> np.ndarray:
    """All monomials of degree 1..``degree``, ordered by degree then lexicographically."""
    cont = np.asarray(cont, dtype=float)
    n, k = cont.shape
    cols = []
    for deg in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(k), deg):
            cols.append(np.prod(cont[:, combo], axis=1))
    return np.column_stack(cols) if cols else np.zeros((n, 0))


def load_csv_dataset(path, schema: DatasetSchema) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read a headed CSV into ``(features, labels, sensitive)``."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, skipinitialspace=True)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ConfigError(f"{path}: empty file") from None
        pos = {h: j for j, h in enumerate(header)}
        for col, role in [(schema.sensitive, "sensitive"), (schema.label, "label")]:
            if col not in pos:
                raise ConfigError(f"{path}: missing {role} column '{col}'")
        for col in list(schema.continuous) + list(schema.categorical):
            if col not in pos:
                raise ConfigError(f"{path}: missing column '{col}'")
        cont_rows, cat_rows, labels, sens = [], [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ConfigError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
            row = [c.strip() for c in row]
            try:
                cont_rows.append([float(row[pos[c]]) for c in schema.continuous])
            except ValueError as exc:
                raise ConfigError(f"{path}:{line_no}: non-numeric continuous value ({exc})") from None
            cat_rows.append([row[pos[c]] for c in schema.categorical])
            lab = row[pos[schema.label]].rstrip(".")
            if schema.positive_label is not None:
                labels.append(1.0 if lab == schema.positive_label else 0.0)
            else:
                try:
                    labels.append(float(lab))
                except ValueError:
                    raise ConfigError(f"{path}:{line_no}: non-numeric label {lab!r}") from None
            sv = row[pos[schema.sensitive]]
            if schema.sensitive_map is not None:
                if sv not in schema.sensitive_map:
                    raise ConfigError(f"{path}:{line_no}: unmapped sensitive value {sv!r}")
                sens.append(float(schema.sensitive_map[sv]))
            else:
                try:
                    sens.append(float(sv))
                except ValueError:
                    raise ConfigError(f"{path}:{line_no}: non-numeric sensitive value {sv!r}") from None
    n = len(labels)
    cont = np.array(cont_rows, dtype=float).reshape(n, len(schema.continuous))
    if n and cont.shape[1]:
        lo, hi = cont.min(axis=0), cont.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        cont = (cont - lo) / span
    blocks = [polynomial_features(cont, schema.degree)]
    for j, (col, levels) in enumerate(schema.categorical.items()):
        onehot = np.zeros((n, max(len(levels) - 1, 0)))
        index = {lv: k for k, lv in enumerate(levels)}
        for r in range(n):
            k = index.get(cat_rows[r][j], 0)
            if k > 0:
                onehot[r, k - 1] = 1.0
        blocks.append(onehot)
    return np.hstack(blocks), np.array(labels), np.array(sens)


# ---------------------------------------------------------------------------
# parameter selection over cohorts

@dataclass
class ParamSelectSpec:
    """``u[i]`` holds the ``n x d`` effect samples of metric ``i``; metric 0 is a lower bound."""

    J: int
    L: int
    u: np.ndarray
    thresholds: np.ndarray

    @property
    def m(self) -> int:
        return self.u.shape[0]

    @property
    def n(self) -> int:
        return self.u.shape[1]

    @property
    def d(self) -> int:
        return self.J * self.L


def gen_param_select(J: int, L: int, m: int, n: int, sigma_sq: float, seed: int,
                     thresholds=None, scales=(0.95, 1.1)) -> ParamSelectSpec:
    """Gaussian effects ``u ~ N(mu, sigma_sq I)`` with ``mu`` entries uniform on (0, 1/J).

    Default thresholds are ``scales[0]`` (first metric) or ``scales[1]``
    (others) times the average effect of the uniform allocation.
    """
    if min(J, L, m, n) < 1:
        raise ConfigError("J, L, m and n must all be at least 1")
    if not sigma_sq >= 0:
        raise ConfigError("sigma_sq must be non-negative")
    rng = np.random.default_rng(seed)
    d = J * L
    mu = rng.uniform(0.0, 1.0 / J, size=(m, d))
    u = mu[:, None, :] + math.sqrt(sigma_sq) * rng.standard_normal((m, n, d))
    if thresholds is None:
        x0 = np.full(d, 1.0 / L)
        base = (u @ x0).mean(axis=1)
        thresholds = base * np.array([scales[0]] + [scales[1]] * (m - 1))
    thresholds = np.asarray(thresholds, dtype=float)
    if thresholds.shape != (m,):
        raise ConfigError(f"expected {m} thresholds, got shape {thresholds.shape}")
    return ParamSelectSpec(J, L, u, thresholds)


def build_param_select(spec: ParamSelectSpec) -> DrfProblem:
    """Metric 0: ``c - u.x <= 0``; metrics ``i >= 1``: ``u.x - c_i <= 0``.

    ``G`` and ``M`` are computed exactly: the extreme values of ``u.x`` over a
    product of simplices pick the best or worst level per cohort.
    """
    J, L, m, n = spec.J, spec.L, spec.m, spec.n
    A, b, M = [], [], np.empty(m)
    blocks = spec.u.reshape(m, n, J, L)
    hi = blocks.max(axis=3).sum(axis=2)
    lo = blocks.min(axis=3).sum(axis=2)
    for i in range(m):
        c = spec.thresholds[i]
        if i == 0:
            A.append(-spec.u[i])
            b.append(np.full(n, c))
        else:
            A.append(spec.u[i])
            b.append(np.full(n, -c))
        M[i] = float(np.max(np.maximum(np.abs(hi[i] - c), np.abs(lo[i] - c))))
    G = float(np.max(np.sqrt((np.abs(blocks).max(axis=3) ** 2).sum(axis=2))))
    dom = ProductOfSimplices(J, L)
    return DrfProblem(LinearOracle(A, b), m, n, spec.d, G, M, dom, name="param-select")


def save_param_select(spec: ParamSelectSpec, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(spec.m):
        p = out / f"effects_metric{i}.csv"
        _write_matrix(p, spec.u[i], [f"u_{j}" for j in range(spec.d)])
        paths.append(p)
    meta = {"type": "param-select", "J": spec.J, "L": spec.L, "m": spec.m, "n": spec.n,
            "thresholds": [float(v) for v in spec.thresholds]}
    mp = out / "spec.json"
    mp.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths + [mp]


def load_param_select(in_dir) -> ParamSelectSpec:
    d = Path(in_dir)
    meta = json.loads((d / "spec.json").read_text(encoding="utf-8"))
    u = np.stack([_read_matrix(d / f"effects_metric{i}.csv") for i in range(meta["m"])])
    return ParamSelectSpec(meta["J"], meta["L"], u, np.array(meta["thresholds"], dtype=float))


# ---------------------------------------------------------------------------
# newsvendor with a CVaR constraint

@dataclass
class NewsvendorSpec:
    cost: np.ndarray
    retail: np.ndarray
    salvage: np.ndarray
    backorder: np.ndarray
    demand: np.ndarray
    budget: float
    cvar_level: float
    cvar_bound: float
    tau_interval: tuple[float, float]

    def __post_init__(self):
        for name in ("cost", "retail", "salvage", "backorder", "demand"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        d = self.cost.shape[0]
        if self.demand.ndim != 2 or self.demand.shape[1] != d:
            raise ConfigError("demand samples must be an n x d matrix")
        if not (np.all(self.cost < self.retail) and np.all(self.salvage < self.retail)):
            raise ConfigError("need cost < retail and salvage < retail for every item")
        if not 0 < self.cvar_level <= 1:
            raise ConfigError("cvar_level must lie in (0, 1]")
        self.tau_interval = (float(self.tau_interval[0]), float(self.tau_interval[1]))

    @property
    def d(self) -> int:
        return self.cost.shape[0]

    @property
    def n(self) -> int:
        return self.demand.shape[0]


def newsvendor_loss(spec: NewsvendorSpec, x, xi) -> np.ndarray:
    """``(c - s).x - (b + r - s).min(x, xi) + b.xi`` for each row of ``xi``."""
    xi = np.atleast_2d(xi)
    k = spec.backorder + spec.retail - spec.salvage
    return (spec.cost - spec.salvage) @ x - np.minimum(x, xi) @ k + xi @ spec.backorder


class NewsvendorOracle(ConstraintOracle):
    """Constraint 0: loss minus ``threshold``; constraint 1: the CVaR surrogate.

    The decision vector is ``(x_1..x_d, tau)``. With ``include_objective``
    false only the CVaR constraint is present (m = 1).
    """

    def __init__(self, spec: NewsvendorSpec, threshold: float, include_objective: bool = True):
        self.spec = spec
        self.threshold = float(threshold)
        self.kinds = (["loss"] if include_objective else []) + ["cvar"]
        self.m = len(self.kinds)
        self.n = spec.n
        self.d = spec.d + 1
        self.Xi = np.ascontiguousarray(spec.demand)
        self.k = spec.backorder + spec.retail - spec.salvage
        self.lin = spec.cost - spec.salvage
        self.const = self.Xi @ spec.backorder
        self.inv_beta = 1.0 / spec.cvar_level

    def _loss(self, x, rows):
        Xi = self.Xi[rows]
        return self.lin @ x - np.minimum(x, Xi) @ self.k + self.const[rows]

    def _eval(self, i, z, rows):
        x, tau = z[:-1], z[-1]
        L = self._loss(x, rows)
        if self.kinds[i] == "loss":
            return L - self.threshold
        return tau + self.inv_beta * np.maximum(L - tau, 0.0) - self.spec.cvar_bound

    def value(self, i, r, z):
        return float(self._eval(i, z, slice(r, r + 1))[0])

    def values(self, i, z):
        return self._eval(i, z, slice(None))

    def values_at(self, i, idx, z):
        return self._eval(i, z, idx)

    def _grad_rows(self, i, z, w, rows):
        # sum_r w_r dF_r for the selected rows
        x, tau = z[:-1], z[-1]
        Xi = self.Xi[rows]
        below = (x <= Xi).astype(float)  # tie goes to the x side
        g = np.empty(self.d)
        if self.kinds[i] == "loss":
            g[:-1] = w.sum() * self.lin - (w @ below) * self.k
            g[-1] = 0.0
            return g
        L = self.lin @ x - np.minimum(x, Xi) @ self.k + self.const[rows]
        act = w * (L > tau)
        g[:-1] = self.inv_beta * (act.sum() * self.lin - (act @ below) * self.k)
        g[-1] = w.sum() - self.inv_beta * act.sum()
        return g

    def subgradient(self, i, r, z):
        return self._grad_rows(i, z, np.ones(1), slice(r, r + 1))

    def weighted_subgradient(self, i, w, z):
        return self._grad_rows(i, z, np.asarray(w, dtype=float), slice(None))

    def weighted(self, i, w):
        w = np.asarray(w, dtype=float)
        return lambda z: (float(w @ self.values(i, z)), self.weighted_subgradient(i, w, z))


def _newsvendor_bounds(spec: NewsvendorSpec, threshold: float, kinds):
    d, C = spec.d, spec.budget
    k = spec.backorder + spec.retail - spec.salvage
    lin = spec.cost - spec.salvage
    Xi = spec.demand
    # convex in x: the max over the budget set sits at a vertex (0 or C e_j)
    verts = np.vstack([np.zeros(d), C * np.eye(d)])
    Lmax = max(float(np.max(newsvendor_loss(spec, v, Xi))) for v in verts)
    # separable lower bound ignoring the budget: each term is minimised at x_j = max(xi_j, 0)
    pos, neg = np.maximum(Xi, 0.0), np.minimum(Xi, 0.0)
    Lmin = float(np.min(Xi @ spec.backorder + pos @ (lin - k) - neg @ k))
    tlo, thi = spec.tau_interval
    beta = spec.cvar_level
    gl = np.maximum(np.abs(lin), np.abs(lin - k))
    M, G = [], 0.0
    for kind in kinds:
        if kind == "loss":
            M.append(max(abs(Lmax - threshold), abs(Lmin - threshold)))
            G = max(G, float(np.linalg.norm(gl)))
        else:
            lo = tlo - spec.cvar_bound
            hi = thi + max(Lmax - tlo, 0.0) / beta - spec.cvar_bound
            lo = min(lo, Lmin - spec.cvar_bound)
            M.append(max(abs(lo), abs(hi)))
            G = max(G, math.sqrt((np.linalg.norm(gl) / beta) ** 2 + max(1.0, 1.0 / beta - 1.0) ** 2))
    return G, np.array(M)


def build_newsvendor(spec: NewsvendorSpec,
                     x0=None) -> tuple[Callable[[float], DrfProblem], DrfProblem]:
    """Return ``(family, cvar_problem)``; ``family(c)`` bounds the loss by ``c``."""
    tlo, thi = spec.tau_interval
    dom = BudgetBox(spec.d, spec.budget, tlo, thi)
    if x0 is None:
        x0 = np.append(np.full(spec.d, 0.15), 0.5 * (tlo + thi))
    x0 = dom.project(np.asarray(x0, dtype=float))

    def family(threshold: float) -> DrfProblem:
        G, M = _newsvendor_bounds(spec, threshold, ["loss", "cvar"])
        return DrfProblem(NewsvendorOracle(spec, threshold), 2, spec.n, spec.d + 1, G, M, dom,
                          x0=x0, name="newsvendor")

    G, M = _newsvendor_bounds(spec, 0.0, ["cvar"])
    cvar = DrfProblem(NewsvendorOracle(spec, 0.0, include_objective=False), 1, spec.n,
                      spec.d + 1, G, M, dom, x0=x0, name="newsvendor-cvar")
    return family, cvar


def gen_newsvendor(d: int, n: int, seed: int, cvar_level: float = 0.1,
                   margin: float = 0.1, cvar_margin: float = 0.0) -> NewsvendorSpec:
    """Correlated Gaussian demand with item economics drawn as described in the README.

    The CVaR bound is the nominal CVaR of the order ``x = mu`` plus
    ``cvar_margin``. The nominal value alone is usually not attainable under
    the worst case over the ambiguity set, so robust instances that should
    be feasible need a positive margin.
    """
    if d < 1 or n < 2:
        raise ConfigError("newsvendor needs d >= 1 and n >= 2")
    rng = np.random.default_rng(seed)
    retail = np.full(d, 0.5)
    salvage = 0.2 * retail
    backorder = 0.25 * retail
    cost = rng.uniform(0.1, 0.25, d)
    mu = rng.uniform(0.1, 0.2, d)
    sigma = rng.uniform(0.05 * mu, 0.2 * mu)
    S = rng.standard_normal((d, d))
    U = S.T @ S
    u = 1.0 / np.sqrt(np.diag(U))
    corr = u[:, None] * U * u[None, :]
    cov = sigma[:, None] * corr * sigma[None, :]
    demand = rng.multivariate_normal(mu, cov, size=n, method="cholesky")
    budget = 1.2 * float(mu.sum())
    tmp = NewsvendorSpec(cost, retail, salvage, backorder, demand, budget, cvar_level, 0.0, (0.0, 0.0))
    losses = newsvendor_loss(tmp, mu, demand)
    tau = float(np.quantile(losses, 1.0 - cvar_level))
    alpha = float(np.mean(tau + np.maximum(losses - tau, 0.0) / cvar_level)) + cvar_margin
    span = float(losses.max() - losses.min())
    pad = margin * (span if span > 0 else 1.0)
    interval = (float(losses.min()) - pad, float(losses.max()) + pad)
    return NewsvendorSpec(cost, retail, salvage, backorder, demand, budget, cvar_level, alpha, interval)


def newsvendor_correlation(d: int, seed: int) -> np.ndarray:
    """The correlation matrix :func:`gen_newsvendor` would use (for inspection)."""
    rng = np.random.default_rng(seed)
    rng.uniform(0.1, 0.25, d)
    mu = rng.uniform(0.1, 0.2, d)
    rng.uniform(0.05 * mu, 0.2 * mu)
    S = rng.standard_normal((d, d))
    U = S.T @ S
    u = 1.0 / np.sqrt(np.diag(U))
    return u[:, None] * U * u[None, :]


def save_newsvendor(spec: NewsvendorSpec, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dp = out / "demand.csv"
    _write_matrix(dp, spec.demand, [f"xi_{j}" for j in range(spec.d)])
    meta = {
        "type": "newsvendor",
        "cost": spec.cost.tolist(),
        "retail": spec.retail.tolist(),
        "salvage": spec.salvage.tolist(),
        "backorder": spec.backorder.tolist(),
        "budget": spec.budget,
        "cvar_level": spec.cvar_level,
        "cvar_bound": spec.cvar_bound,
        "tau_interval": list(spec.tau_interval),
    }
    mp = out / "spec.json"
    mp.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return [dp, mp]


def load_newsvendor(in_dir) -> NewsvendorSpec:
    d = Path(in_dir)
    meta = json.loads((d / "spec.json").read_text(encoding="utf-8"))
    demand = _read_matrix(d / "demand.csv")
    return NewsvendorSpec(meta["cost"], meta["retail"], meta["salvage"], meta["backorder"],
                          demand, meta["budget"], meta["cvar_level"], meta["cvar_bound"],
                          tuple(meta["tau_interval"]))


def _write_matrix(path: Path, mat: np.ndarray, header: list[str]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in mat:
            w.writerow([repr(float(v)) for v in row])


def _read_matrix(path: Path) -> np.ndarray:
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ConfigError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ConfigError(f"{path}:{line_no}: {exc}") from None
    return np.array(rows, dtype=float).reshape(len(rows), len(header))
