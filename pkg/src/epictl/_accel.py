"""Backend selection for the hot kernels.

Kernels exist twice: a numba ``@njit`` loop version and a vectorised numpy
version. ``EPICTL_BACKEND`` picks the default (``numba`` or ``numpy``); when
numba cannot be imported the numpy path is used regardless.
"""

from __future__ import annotations

import os

try:
    import numba

    HAS_NUMBA = True
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # skip the TBB probe, which warns on older TBB installs
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover
    HAS_NUMBA = False

BACKENDS = ("numba", "numpy")


def default_backend() -> str:
    name = os.environ.get("EPICTL_BACKEND", "numba").strip().lower()
    if name not in BACKENDS:
        raise ValueError(f"EPICTL_BACKEND must be one of {BACKENDS}, got {name!r}")
    if name == "numba" and not HAS_NUMBA:
        return "numpy"
    return name


def resolve_backend(backend: str | None) -> str:
    if backend is None:
        return default_backend()
    if backend not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}, got {backend!r}")
    if backend == "numba" and not HAS_NUMBA:
        return "numpy"
    return backend


if HAS_NUMBA:
    from numba import njit, prange
else:  # pragma: no cover

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f

    prange = range
