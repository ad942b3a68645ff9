"""Kernel backend selection, done once at import.

The compiled extension is used when it imports cleanly; setting
``MDPSENSE_PURE_PYTHON=1`` forces the NumPy fallback.
"""
import os

from . import _kernels_py

if os.environ.get("MDPSENSE_PURE_PYTHON", "").strip() not in ("", "0"):
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels
    except ImportError:  # extension not built
        kernels = _kernels_py

BACKEND = kernels.BACKEND


def available_backends():
    """All importable kernel modules, compiled first."""
    mods = []
    try:
        from . import _kernels

        mods.append(_kernels)
    except ImportError:
        pass
    mods.append(_kernels_py)
    return mods
