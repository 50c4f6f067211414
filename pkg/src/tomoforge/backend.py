"""Kernel backend selection.

The compiled Cython kernels are preferred; the pure-NumPy fallback keeps
the package functional without a C toolchain.  ``TOMOFORGE_KERNELS``
overrides the choice: ``compiled`` (fail if unavailable), ``python``, or
``auto`` (default).
"""

from __future__ import annotations

import os

from tomoforge import _kernels_py


def _select():
    choice = os.environ.get("TOMOFORGE_KERNELS", "auto").lower()
    if choice not in ("auto", "compiled", "python"):
        raise ValueError(
            f"TOMOFORGE_KERNELS must be auto, compiled, or python; got {choice!r}")
    if choice == "python":
        return _kernels_py
    try:
        from tomoforge import _kernels
        return _kernels
    except ImportError:
        if choice == "compiled":
            raise
        return _kernels_py


kernels = _select()


def backend_name() -> str:
    """Name of the active kernel backend ("compiled" or "python")."""
    return kernels.BACKEND_NAME


def available_backends():
    """All importable kernel backends, compiled first."""
    out = []
    try:
        from tomoforge import _kernels
        out.append(_kernels)
    except ImportError:
        pass
    out.append(_kernels_py)
    return out
