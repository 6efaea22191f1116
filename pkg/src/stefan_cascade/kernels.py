"""Kernel backend selection.

The compiled extension is used when it imports; set ``STEFAN_CASCADE_PURE=1`` to force the
pure-Python implementations (used by the benchmark and the parity tests).
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py


def _load() -> tuple[ModuleType, str]:
    if os.environ.get("STEFAN_CASCADE_PURE", "") not in ("", "0"):
        return _kernels_py, "python"
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        return _kernels_py, "python"
    return _kernels, "compiled"


backend, BACKEND = _load()

fast_march = backend.fast_march
stamp_triangles = backend.stamp_triangles
trace_batch = backend.trace_batch

STATUS_MASK = _kernels_py.STATUS_MASK
STATUS_CAP = _kernels_py.STATUS_CAP
STATUS_REVERSAL = _kernels_py.STATUS_REVERSAL
STATUS_STAGNANT = _kernels_py.STATUS_STAGNANT
STATUS_OUTSIDE = _kernels_py.STATUS_OUTSIDE
STATUS_MAX_STEPS = _kernels_py.STATUS_MAX_STEPS

__all__ = ["BACKEND", "fast_march", "stamp_triangles", "trace_batch", "backend"]
