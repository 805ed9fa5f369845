"""Kernel backend selection.

The hot numeric kernels (chain kinematics, wire lengths, energy/gradient,
contact sampling) exist twice: a numba ``@njit`` implementation and a pure
numpy fallback with identical semantics.  Selection is controlled by the
``TAILSIM_BACKEND`` environment variable:

* ``auto`` (default): numba when importable, numpy otherwise
* ``numba``: require numba, fail loudly if missing
* ``numpy``: force the vectorized fallback

``benchmarks/bench_backends.py`` compares the two.
"""

from __future__ import annotations

import os

_ENV_VAR = "TAILSIM_BACKEND"
_cached = None
_cached_name = None


def backend_name() -> str:
    kernels()
    return _cached_name


def kernels():
    """The active kernel module (resolved once per process)."""
    global _cached, _cached_name
    if _cached is not None:
        return _cached
    choice = os.environ.get(_ENV_VAR, "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"{_ENV_VAR} must be one of auto|numba|numpy, got {choice!r}")
    if choice in ("auto", "numba"):
        try:
            from . import _kernels_numba as mod
            _cached, _cached_name = mod, "numba"
            return _cached
        except ImportError:
            if choice == "numba":
                raise
    from . import _kernels_numpy as mod
    _cached, _cached_name = mod, "numpy"
    return _cached


def get_backend(name: str):
    """Fetch a specific backend module regardless of the env flag."""
    if name == "numpy":
        from . import _kernels_numpy as mod
        return mod
    if name == "numba":
        from . import _kernels_numba as mod
        return mod
    raise ValueError(f"unknown backend {name!r}")
