"""Kernel dispatch: the compiled extension when importable, numpy otherwise.

Set ``URBANSEG_PURE_PYTHON=1`` to force the numpy path.
"""
import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("URBANSEG_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python kernels requested")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _pykernels}
if _compiled is not None:
    BACKENDS["cython"] = _compiled
BACKEND = "cython" if _compiled is not None else "python"
_impl = BACKENDS[BACKEND]


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def fps(points, k: int, start: int, backend: str | None = None):
    """Return ``(indices, selection_distances)``; see :func:`urbanseg.partition.fps`."""
    impl = BACKENDS[backend] if backend else _impl
    return impl.fps(_f64(points), int(k), int(start))


def relation_matrix(fg, cand, backend: str | None = None):
    impl = BACKENDS[backend] if backend else _impl
    return impl.relation_matrix(_f64(fg), _f64(cand))


def nearest_candidate(fg, cand, backend: str | None = None):
    """Row-wise argmin of :func:`relation_matrix` without materializing it."""
    impl = BACKENDS[backend] if backend else _impl
    return impl.nearest_candidate(_f64(fg), _f64(cand))
