"""Backend selection for the numeric kernels.

Kernels are compiled with numba when it is importable and the
``PPEWATCH_NUMBA`` environment variable is not set to a false value
("0", "false", "no", "off"). Otherwise every kernel dispatches to its
vectorized numpy twin.
"""

from __future__ import annotations

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_FALSE = {"0", "false", "no", "off"}

USE_NUMBA: bool = numba is not None and os.environ.get("PPEWATCH_NUMBA", "1").strip().lower() not in _FALSE


def njit(fn):
    """Compile ``fn`` in nopython mode, or return it untouched if numba is unavailable."""
    if numba is None:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
