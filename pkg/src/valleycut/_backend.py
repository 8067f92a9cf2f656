"""Backend selection for the hot grid kernels.

Every per-event grid update funnels through a small set of inner loops that
exist in two variants: a numba ``@njit`` loop and a vectorized pure-numpy
fallback. The environment variable ``VALLEYCUT_BACKEND`` picks one at import
time:

    VALLEYCUT_BACKEND=numba   force the jit path (error if numba is missing)
    VALLEYCUT_BACKEND=numpy   force the pure-numpy path
    unset / "auto"            numba when importable, numpy otherwise

``set_backend`` flips the choice at runtime; the benchmark command uses it to
time both paths on the same machine.
"""

from __future__ import annotations

import os

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        if args and callable(args[0]):
            return args[0]
        return wrap


_VALID = ("numba", "numpy")


def _from_env() -> str:
    req = os.environ.get("VALLEYCUT_BACKEND", "auto").strip().lower()
    if req in ("", "auto"):
        return "numba" if HAS_NUMBA else "numpy"
    if req not in _VALID:
        raise RuntimeError(
            f"VALLEYCUT_BACKEND={req!r} not understood (use 'numba', 'numpy' or 'auto')"
        )
    if req == "numba" and not HAS_NUMBA:
        raise RuntimeError("VALLEYCUT_BACKEND=numba but numba is not importable")
    return req


_active = _from_env()


def active_backend() -> str:
    """Name of the backend currently answering the hot loops."""
    return _active


def set_backend(name: str) -> None:
    """Switch backends at runtime ('numba' or 'numpy')."""
    global _active
    if name not in _VALID:
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    _active = name


def using_numba() -> bool:
    return _active == "numba"
