"""Hot loops, compiled when the extension is available.

Set ``MPRBENCH_PURE_PYTHON=1`` to force the Python implementations.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("MPRBENCH_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def bm25_scores(query_terms, indptr, doc_ids, tfs, idf, doc_len, avgdl: float, k1: float, b: float) -> np.ndarray:
    return _impl.bm25_scores(
        np.ascontiguousarray(query_terms, dtype=np.int64),
        np.ascontiguousarray(indptr, dtype=np.int64),
        np.ascontiguousarray(doc_ids, dtype=np.int64),
        np.ascontiguousarray(tfs, dtype=np.float64),
        np.ascontiguousarray(idf, dtype=np.float64),
        np.ascontiguousarray(doc_len, dtype=np.float64),
        float(avgdl),
        float(k1),
        float(b),
    )


def kmeans_assign(X, C) -> tuple[np.ndarray, np.ndarray]:
    """Nearest centroid (lowest index on ties) and its squared distance."""
    return _impl.kmeans_assign(
        np.ascontiguousarray(X, dtype=np.float64), np.ascontiguousarray(C, dtype=np.float64)
    )
