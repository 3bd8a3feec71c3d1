"""Numba toggle.

Set ``FPNET_DISABLE_NUMBA=1`` to force the pure-numpy kernel path. When numba is
not importable the numpy path is used regardless of the flag.
"""

from __future__ import annotations

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAS_NUMBA = numba is not None
DISABLED = os.environ.get("FPNET_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}
USE_NUMBA = HAS_NUMBA and not DISABLED


def njit(fn):
    """Compile ``fn`` with numba when available, else return it unchanged."""
    if not HAS_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def set_threads(n: int | None) -> None:
    if HAS_NUMBA and n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
