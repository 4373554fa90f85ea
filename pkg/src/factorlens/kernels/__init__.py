"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import time from the ``FACTORLENS_BACKEND``
environment variable: ``numba`` (default when numba is importable) or
``numpy``. Both backends implement the same two primitives, ``im2col`` and
``col2im``; everything else (convolutions and their gradients) is BLAS
matmuls layered on top in :mod:`factorlens.kernels.conv`.
"""

import os

from . import numpy_kernels

BACKEND_ENV = "FACTORLENS_BACKEND"


def _select_backend():
    choice = os.environ.get(BACKEND_ENV, "").strip().lower()
    if choice not in ("", "numba", "numpy"):
        raise ValueError(
            f"{BACKEND_ENV} must be 'numba' or 'numpy', got {choice!r}"
        )
    if choice == "numpy":
        return numpy_kernels, "numpy"
    try:
        from . import numba_kernels
        return numba_kernels, "numba"
    except ImportError:
        if choice == "numba":
            raise
        return numpy_kernels, "numpy"


_impl, BACKEND = _select_backend()

im2col = _impl.im2col
col2im = _impl.col2im


def backend_name() -> str:
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return BACKEND
