"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy twin.
Set ``ROOTEMBED_BACKEND=python`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_FORCED = os.environ.get("ROOTEMBED_BACKEND", "").strip().lower()


def get(name: str | None = None):
    """Kernel module by name: ``"compiled"``, ``"python"`` or ``None`` for the default."""
    name = name or ("python" if _FORCED == "python" or _ckernels is None else "compiled")
    if name == "python":
        return _pykernels
    if name == "compiled":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def active_name() -> str:
    return "compiled" if get() is _ckernels and _ckernels is not None else "python"


def compiled_available() -> bool:
    return _ckernels is not None
