"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

The backend is chosen once at import time from ``LOSSFORGE_NUMBA``:
``1`` (default) compiles the loop kernels with ``numba.njit`` when numba is
importable, ``0`` forces the vectorized numpy path.  Both implementations
stay reachable as :data:`numpy_kernels` and :func:`numba_kernels` for tests
and benchmarks.
"""

import logging
import os
import types

from . import _loops, _numpy

log = logging.getLogger(__name__)

KERNELS = ("vs_grid_counts", "min_margins", "cs_svm_dual", "ngd_vs_binary")

numpy_kernels = types.SimpleNamespace(**{k: getattr(_numpy, k) for k in KERNELS})

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False

_compiled = None


def numba_kernels():
    """The njit-compiled loop kernels (compiled lazily, cached on disk)."""
    global _compiled
    if not NUMBA_AVAILABLE:
        raise RuntimeError("numba is not installed")
    if _compiled is None:
        _compiled = types.SimpleNamespace(
            **{k: numba.njit(cache=True)(getattr(_loops, k)) for k in KERNELS}
        )
    return _compiled


def _wanted():
    flag = os.environ.get("LOSSFORGE_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


USE_NUMBA = NUMBA_AVAILABLE and _wanted()
BACKEND = "numba" if USE_NUMBA else "numpy"


def active():
    return numba_kernels() if USE_NUMBA else numpy_kernels


def vs_grid_counts(*args):
    return active().vs_grid_counts(*args)


def min_margins(*args):
    return active().min_margins(*args)


def cs_svm_dual(*args):
    return active().cs_svm_dual(*args)


def ngd_vs_binary(*args):
    return active().ngd_vs_binary(*args)
