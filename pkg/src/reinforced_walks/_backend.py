"""Kernel backend selection.

The compiled extension is used when it imports; setting the environment
variable ``REINFORCED_WALKS_PURE_PYTHON=1`` forces the numpy fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

try:
    if os.environ.get("REINFORCED_WALKS_PURE_PYTHON"):
        raise ImportError("pure-Python backend requested")
    from . import _kernels as kernels

    BACKEND = "cython"
except ImportError:
    kernels = _pykernels
    BACKEND = "python"


def get_kernels(name: str | None = None):
    """Kernel module by name (``"cython"`` or ``"python"``); default is the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
