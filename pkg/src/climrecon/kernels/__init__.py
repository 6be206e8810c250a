"""Kernel backend selection.

The compiled extension (``climrecon.kernels._ckern``) is preferred when it
imported cleanly; otherwise the NumPy reference implementation is used. Set
``CLIMRECON_BACKEND=python`` to force the fallback, or
``CLIMRECON_BACKEND=compiled`` to fail loudly if the extension is missing.
Both backends expose the same three functions and must agree exactly;
``benchmarks/backend_bench.py`` compares their speed.
"""

from __future__ import annotations

import logging
import os

from . import pyref
from .tree import DEFAULT_LEAF_SIZE, TreeArrays, build_tree

_log = logging.getLogger(__name__)

_requested = os.environ.get("CLIMRECON_BACKEND", "").strip().lower()

if _requested == "python":
    _impl = pyref
elif _requested == "compiled":
    from . import _ckern as _impl  # type: ignore[no-redef]
else:
    if _requested:
        raise ValueError(f"unknown CLIMRECON_BACKEND {_requested!r}; use 'python' or 'compiled'")
    try:
        from . import _ckern as _impl  # type: ignore[no-redef]
    except ImportError:
        _log.debug("compiled kernels unavailable, using the NumPy fallback")
        _impl = pyref

BACKEND: str = _impl.BACKEND_NAME
knn_many = _impl.knn_many
pairwise_distances = _impl.pairwise_distances
variogram_accumulate = _impl.variogram_accumulate

__all__ = [
    "BACKEND",
    "DEFAULT_LEAF_SIZE",
    "TreeArrays",
    "build_tree",
    "knn_many",
    "pairwise_distances",
    "variogram_accumulate",
]
