"""Kernel backend selection.

The hot per-subject loops have two implementations: numba-compiled scalar
loops and a vectorised numpy/scipy path. ``REGMVST_BACKEND=numpy`` forces
the fallback; the default is numba when it imports cleanly.
"""

import os

_requested = os.environ.get("REGMVST_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"REGMVST_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    if _requested == "numba":
        import numba  # noqa: F401
        _active = "numba"
    else:
        _active = "numpy"
except ImportError:  # pragma: no cover - numba is a declared dependency
    _active = "numpy"


def active_backend():
    return _active


def set_backend(name):
    """Switch backend at runtime (used by the benchmark and the dual-route tests)."""
    global _active
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    _active = name


def kernels(name=None):
    name = name or _active
    if name == "numba":
        from . import _kernels_numba as mod
    else:
        from . import _kernels_numpy as mod
    return mod
