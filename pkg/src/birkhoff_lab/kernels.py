"""Kernel backend selection.

The compiled extension is preferred; set ``BIRKHOFF_LAB_PURE=1`` to force
the pure-Python fallback (both expose ``metric``, ``step``, ``integrate``).
"""
import logging
import os

from . import _pykernels as pykernels

log = logging.getLogger(__name__)

try:
    from . import _ckernels as ckernels
except ImportError:  # extension not built
    ckernels = None

if ckernels is not None and os.environ.get("BIRKHOFF_LAB_PURE", "") not in ("1", "true", "yes"):
    backend = ckernels
else:
    if ckernels is None:
        log.info("compiled kernels unavailable; using pure-Python fallback")
    backend = pykernels

IMPLEMENTATION = backend.IMPLEMENTATION


def available():
    """Names of the importable kernel implementations."""
    out = ["python"]
    if ckernels is not None:
        out.insert(0, "cython")
    return out


def get(name=None):
    """Return a kernel module by name (default: the selected backend)."""
    if name is None:
        return backend
    if name == "python":
        return pykernels
    if name == "cython":
        if ckernels is None:
            raise ImportError("compiled kernels are not built")
        return ckernels
    raise ValueError(f"unknown kernel implementation {name!r}")
