"""Kernel backend selection.

The compiled extension is preferred when importable; `CONVBASIS_PURE_PYTHON=1`
forces the numpy fallback. Selection happens once at import.
"""

import os
from contextlib import contextmanager

from . import _kernels_py

if os.environ.get("CONVBASIS_PURE_PYTHON"):
    kernels = _kernels_py
    _BACKEND = "python"
else:
    try:
        from . import _kernels as kernels

        _BACKEND = "compiled"
    except ImportError:
        kernels = _kernels_py
        _BACKEND = "python"


def active_backend():
    """Name of the backend in use: 'compiled' or 'python'."""
    return _BACKEND


def available_backends():
    """Mapping of backend name -> kernel module, for side-by-side benchmarks."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels

        out["compiled"] = _kernels
    except ImportError:
        pass
    return out


@contextmanager
def use_kernels(name):
    """Temporarily route kernel calls through the named backend.

    Callers must late-bind (`backend.kernels.fn`, not `from .backend import
    kernels`) for the swap to take effect.
    """
    global kernels, _BACKEND
    table = available_backends()
    if name not in table:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(table)}")
    old, old_name = kernels, _BACKEND
    kernels, _BACKEND = table[name], name
    try:
        yield
    finally:
        kernels, _BACKEND = old, old_name
