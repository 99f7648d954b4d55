"""Kernel dispatch: the compiled extension when available, else pure Python.

Set ``GRAPHIDS_PURE_PYTHON=1`` to force the fallback.
"""

import os

from graphids import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("GRAPHIDS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from graphids import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

sample_segments = _impl.sample_segments
descending_counts = _impl.descending_counts

__all__ = ["BACKEND", "sample_segments", "descending_counts"]
