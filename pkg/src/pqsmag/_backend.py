"""Pick the compiled kernels when importable, otherwise the NumPy ones.

Set ``PQSMAG_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels

NAMES = ("sample_chain", "simulate_truth", "forward_pass", "backward_pass")


def _load() -> tuple[ModuleType, str]:
    if os.environ.get("PQSMAG_PURE_PYTHON", "") not in ("", "0"):
        return _pykernels, "python"
    try:
        from . import _ckernels
    except ImportError:
        return _pykernels, "python"
    return _ckernels, "cython"


kernels, name = _load()


def get(backend: str | None = None) -> ModuleType:
    """Kernel module by name (``"cython"``, ``"python"``) or the active default."""
    if backend is None:
        return kernels
    if backend == "python":
        return _pykernels
    if backend == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {backend!r}")


def available() -> list[str]:
    out = ["python"]
    try:
        from . import _ckernels  # noqa: F401
    except ImportError:
        return out
    return ["cython"] + out
