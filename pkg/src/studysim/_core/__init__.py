"""Kernel backend selection.

The hot loops (tree growth, forest traversal, factor updates) exist twice:
a compiled Cython extension and a pure-Python/numpy fallback with identical
semantics. The compiled backend is used when importable; set
STUDYSIM_BACKEND=python or =cython to force one. Both are individually
deterministic and produce bit-identical results.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

_modules: dict[str, object] = {}


def _load(name: str):
    if name in _modules:
        return _modules[name]
    if name == "python":
        from studysim._core import pykernels as mod
    elif name == "cython":
        try:
            from studysim._core import _kernels as mod  # type: ignore[attr-defined]
        except ImportError:
            mod = None
    else:
        raise ValueError(f"unknown backend {name!r} (expected 'cython' or 'python')")
    _modules[name] = mod
    return mod


def available_backends() -> list[str]:
    return [name for name in ("cython", "python") if _load(name) is not None]


def _initial_backend() -> str:
    requested = os.environ.get("STUDYSIM_BACKEND")
    if requested:
        if _load(requested) is None:
            raise ImportError(
                f"STUDYSIM_BACKEND={requested} but that backend is not available"
            )
        return requested
    return "cython" if _load("cython") is not None else "python"


_active = _initial_backend()


def backend_name() -> str:
    return _active


def kernels():
    """The active kernel module; call at use time, not import time."""
    return _load(_active)


@contextmanager
def use_backend(name: str):
    """Temporarily switch the active backend (used by tests and benchmarks)."""
    global _active
    if _load(name) is None:
        raise ImportError(f"backend {name!r} is not available")
    previous = _active
    _active = name
    try:
        yield _load(name)
    finally:
        _active = previous
