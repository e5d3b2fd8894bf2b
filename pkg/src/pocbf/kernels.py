"""Kernel selection: the compiled extension when importable, numpy otherwise.

Set ``POCBF_KERNEL=numpy`` to force the reference implementation.
"""
from __future__ import annotations

import os

from . import _kernel_py

try:  # pragma: no cover - depends on the build
    from . import _kernel as _compiled
except ImportError:  # pragma: no cover
    _compiled = None

AVAILABLE = ("cython", "numpy") if _compiled is not None else ("numpy",)
DEFAULT = "numpy" if os.environ.get("POCBF_KERNEL") == "numpy" or _compiled is None else "cython"


def resolve(name: str | None = None) -> str:
    name = DEFAULT if name in (None, "auto") else name
    if name not in AVAILABLE:
        raise ValueError(f"kernel {name!r} is not available (have {AVAILABLE})")
    return name


def get(name: str | None = None):
    """``simulate_chunk`` of the requested kernel."""
    return _compiled.simulate_chunk if resolve(name) == "cython" else _kernel_py.simulate_chunk
