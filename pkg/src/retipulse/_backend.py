"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when importable. Setting
``RETIPULSE_BACKEND=python`` forces the numpy fallback.
"""

import os

from . import _pykernels

NAME = "python"
kernels = _pykernels

if os.environ.get("RETIPULSE_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as kernels  # noqa: F811
        NAME = "cython"
    except ImportError:
        pass


def available():
    """Return the mapping of every importable backend name to its module."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        return found
    found["cython"] = _ckernels
    return found


def use(name):
    """Switch the active backend; returns the previous name."""
    global NAME, kernels
    found = available()
    if name not in found:
        raise ValueError(f"backend {name!r} is not available (have {sorted(found)})")
    previous = NAME
    NAME, kernels = name, found[name]
    return previous
