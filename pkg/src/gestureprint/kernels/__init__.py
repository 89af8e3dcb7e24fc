"""Geometry and clustering kernels with a selectable backend.

``GESTUREPRINT_KERNELS=numpy`` forces the pure-numpy path; the default is
``numba`` and silently falls back to numpy when numba cannot be imported.
Both backends return bit-identical results.
"""
import os

from . import _np

BACKEND = os.environ.get("GESTUREPRINT_KERNELS", "numba").strip().lower()

if BACKEND == "numba":
    try:
        from . import _nb as _impl
    except ImportError:  # pragma: no cover - numba is a declared dependency
        BACKEND = "numpy"
        _impl = _np
elif BACKEND == "numpy":
    _impl = _np
else:
    raise ImportError(f"GESTUREPRINT_KERNELS must be 'numba' or 'numpy', got {BACKEND!r}")

pairwise_dist = _impl.pairwise_dist
pairwise_sqdist = _impl.pairwise_sqdist
directed_min_dist = _impl.directed_min_dist
mutual_min_dist = _impl.mutual_min_dist
left_sum = _impl.left_sum
farthest_point_sample = _impl.farthest_point_sample
ball_query = _impl.ball_query
dbscan = _impl.dbscan
scatter_add_rows = _impl.scatter_add_rows

__all__ = [
    "BACKEND",
    "pairwise_dist",
    "pairwise_sqdist",
    "directed_min_dist",
    "mutual_min_dist",
    "left_sum",
    "farthest_point_sample",
    "ball_query",
    "dbscan",
    "scatter_add_rows",
]
