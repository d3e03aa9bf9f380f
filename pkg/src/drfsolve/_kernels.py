"""Kernel backend selection.

The compiled extension is preferred. Setting ``DRF_PURE_PYTHON=1`` before
import forces the pure-Python reference implementation.
"""
from __future__ import annotations

import os

from . import _pykernels as pure

BACKEND = "python"
if os.environ.get("DRF_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as _impl

        BACKEND = "compiled"
    except ImportError:  # pragma: no cover - depends on build environment
        _impl = pure
else:
    _impl = pure

fenwick_build = _impl.fenwick_build
fenwick_add = _impl.fenwick_add
fenwick_prefix = _impl.fenwick_prefix
fenwick_search = _impl.fenwick_search
fenwick_search_many = _impl.fenwick_search_many
alpha_star = _impl.alpha_star

__all__ = [
    "BACKEND",
    "pure",
    "fenwick_build",
    "fenwick_add",
    "fenwick_prefix",
    "fenwick_search",
    "fenwick_search_many",
    "alpha_star",
]
