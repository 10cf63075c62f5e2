"""Kernel backend selection.

The compiled ``_kernels`` extension is used when importable; otherwise the
pure-numpy ``_kernels_py`` takes over.  ``FATIGUELIFE_BACKEND=python``
forces the fallback (useful for benchmarking and cross-checking).
"""
import os

if os.environ.get("FATIGUELIFE_BACKEND", "").lower() in ("python", "py", "numpy"):
    from . import _kernels_py as kernels
    NAME = "python"
else:
    try:
        from . import _kernels as kernels
        NAME = "cython"
    except ImportError:  # extension not built
        from . import _kernels_py as kernels
        NAME = "python"

__all__ = ["kernels", "NAME"]
