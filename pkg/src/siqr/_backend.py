"""Kernel backend selection.

``SIQR_BACKEND`` may be ``auto`` (default: compiled if importable),
``compiled`` (fail if the extension is missing) or ``python``.
"""
import os

from . import _pykernels

_choice = os.environ.get("SIQR_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "compiled", "python"):
    raise ImportError(f"SIQR_BACKEND must be auto, compiled or python, got {_choice!r}")

compiled = None
if _choice != "python":
    try:
        from . import _kernels as compiled
    except ImportError:
        if _choice == "compiled":
            raise
        compiled = None

kernels = compiled if compiled is not None else _pykernels
python = _pykernels
BACKEND = kernels.BACKEND


def get(name=None):
    """Kernel module by name; ``None`` returns the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "compiled":
        if compiled is None:
            raise ImportError("compiled kernels are not available")
        return compiled
    raise ValueError(f"unknown backend {name!r}")
