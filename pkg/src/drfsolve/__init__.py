"""Stochastic first-order solver for distributionally robust feasibility.

Constraints take the form ``sup_{p in P} p . F^i(x) <= 0`` with ``P`` a
chi-square ball of unnormalised weights over ``n`` scenarios. The solver
returns either an approximately feasible ``x`` or a certificate of
infeasibility.
"""
from ._kernels import BACKEND
from .ambiguity import Chi2Set, DistState, audit, contains, project, sample_index, sup_linear
from .core import (
    Certificate,
    CertificateKind,
    CertificateSource,
    ConfigError,
    ConstraintOracle,
    DomainError,
    DrfError,
    DrfProblem,
    RunningAverage,
    phi,
    validate_problem,
)
from .meta import SolverConfig, optimize_binary_search, plan, run_feasibility
from .spgap import sp_gap

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Certificate",
    "CertificateKind",
    "CertificateSource",
    "Chi2Set",
    "ConfigError",
    "ConstraintOracle",
    "DistState",
    "DomainError",
    "DrfError",
    "DrfProblem",
    "RunningAverage",
    "SolverConfig",
    "audit",
    "contains",
    "optimize_binary_search",
    "phi",
    "plan",
    "project",
    "run_feasibility",
    "sample_index",
    "sp_gap",
    "sup_linear",
    "validate_problem",
]
