"""Stepping-kernel selection.

The compiled Cython kernel is preferred when its extension module was
built; otherwise the pure-Python reference kernel is used.  Both perform
identical floating-point operations, so results do not depend on the
selection.  use() forces a specific kernel (benchmarks, differential
tests).
"""

from __future__ import annotations

from . import _kernels_py

try:
    from . import _kernels_cy
except ImportError:  # extension not built
    _kernels_cy = None

_active = _kernels_cy if _kernels_cy is not None else _kernels_py


def available():
    names = ["python"]
    if _kernels_cy is not None:
        names.insert(0, "compiled")
    return names


def active_name() -> str:
    return "compiled" if _active is _kernels_cy else "python"


def get(name: str | None = None):
    """Return a kernel module: the active one, or one by name."""
    if name is None:
        return _active
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if _kernels_cy is None:
            raise RuntimeError("compiled kernel not built; run: python setup.py build_ext --inplace")
        return _kernels_cy
    raise ValueError(f"unknown kernel {name!r}")


def use(name: str) -> str:
    """Select the kernel used by subsequent simulations."""
    global _active
    _active = get(name)
    return active_name()
