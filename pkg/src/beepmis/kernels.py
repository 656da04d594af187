"""Backend selection for the round kernels.

The compiled extension is used when importable; set ``BEEPMIS_PURE_PYTHON=1``
to force the NumPy implementation.
"""
import os

from . import _pykernels as pure
from ._pykernels import (  # noqa: F401
    STREAM_BEEP,
    STREAM_FAULT_LEVEL,
    STREAM_FAULT_SELECT,
    V1,
    V2,
    neighbor_count,
    vertex_hashes,
)

compiled = None
if not os.environ.get("BEEPMIS_PURE_PYTHON"):
    try:
        from . import _ckernels as compiled
    except ImportError:  # extension not built
        compiled = None

BACKEND = "cython" if compiled is not None else "numpy"
_impl = compiled if compiled is not None else pure


def step(indptr, indices, levels, lmax, variant, seed, round_index):
    return _impl.step(indptr, indices, levels, lmax, variant, seed, round_index)


def stable_masks(indptr, indices, levels, lmax, variant):
    return _impl.stable_masks(indptr, indices, levels, lmax, variant)


def get_backend(name):
    """Kernel module by name (``"numpy"`` or ``"cython"``)."""
    if name == "numpy":
        return pure
    if name == "cython":
        if compiled is None:
            raise ImportError("compiled kernels are not available")
        return compiled
    raise ValueError(f"unknown backend {name!r}")


def set_backend(name):
    """Switch the active backend at runtime; returns the previous backend name."""
    global _impl, BACKEND
    previous = BACKEND
    _impl = get_backend(name)
    BACKEND = name
    return previous
