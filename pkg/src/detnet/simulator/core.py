"""Kernel selection: the compiled core when importable, else the Python twin.

Set ``DETNET_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _core_py

if os.environ.get("DETNET_PURE_PYTHON") == "1":
    simulate = _core_py.simulate
    BACKEND = "python"
else:
    try:
        from ._core import simulate
        BACKEND = "cython"
    except ImportError:
        simulate = _core_py.simulate
        BACKEND = "python"

__all__ = ["BACKEND", "simulate"]
