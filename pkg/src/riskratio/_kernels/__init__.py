"""Backend selection for the hot numeric kernels.

``RISKRATIO_BACKEND=numpy`` forces the pure-numpy path; otherwise the numba
kernels are used when numba imports cleanly.
"""
from __future__ import annotations

import logging
import os

from . import numpy_impl

logger = logging.getLogger(__name__)

LRT = numpy_impl.LRT
KOOPMAN = numpy_impl.KOOPMAN


def _load():
    requested = os.environ.get("RISKRATIO_BACKEND", "numba").strip().lower()
    if requested not in ("numba", "numpy"):
        raise ValueError(f"RISKRATIO_BACKEND must be 'numba' or 'numpy', got {requested!r}")
    if requested == "numpy":
        return "numpy", numpy_impl
    try:
        from . import numba_impl
    except ImportError:  # pragma: no cover - numba missing
        logger.warning("numba unavailable; falling back to numpy kernels")
        return "numpy", numpy_impl
    return "numba", numba_impl


BACKEND, impl = _load()


def get_impl(name: str | None = None):
    """Kernel module by name (``None`` = the active backend)."""
    if name is None:
        return impl
    if name == "numpy":
        return numpy_impl
    if name == "numba":
        from . import numba_impl
        return numba_impl
    raise ValueError(name)
