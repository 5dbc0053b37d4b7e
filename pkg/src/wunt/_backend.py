"""Select the compute backend for the hot loops.

The numba kernels are used when numba imports cleanly and the environment
variable ``WUNT_DISABLE_NUMBA`` is unset (or set to ``0``/``false``). Both
backends expose the same functions with the same signatures; see
``_kernels_numba`` and ``_kernels_numpy``.
"""

from __future__ import annotations

import os

from .errors import ConfigError

_FALSY = {"", "0", "false", "no", "off"}


def numba_requested() -> bool:
    return os.environ.get("WUNT_DISABLE_NUMBA", "").strip().lower() in _FALSY


try:  # pragma: no cover - exercised implicitly
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` ("numba", "numpy" or None = auto)."""
    if name is None:
        name = "numba" if (HAVE_NUMBA and numba_requested()) else "numpy"
    if name == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not installed")
        from . import _kernels_numba as mod
    elif name == "numpy":
        from . import _kernels_numpy as mod
    else:
        raise ConfigError(f"unknown backend {name!r}")
    return mod


def backend_name() -> str:
    return get_backend().NAME
