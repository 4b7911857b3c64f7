"""Backend dispatch for the hot SC kernels.

The numba path is used when numba imports cleanly, unless the environment
variable ``BCCPOLAR_NUMBA`` is set to ``0``. Both paths share one contract and
consume the same pre-drawn random numbers, so their outputs agree.
"""

import importlib
import os

import numpy as np

from . import _numpy
from ._numpy import DECIDE, FIXED, SAMPLE, UNIFORM, f_op, g_op, p_one

_numba = None
if os.environ.get("BCCPOLAR_NUMBA", "1") != "0":
    try:
        _numba = importlib.import_module(f"{__name__}._numba")
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _numba = None

BACKEND = "numba" if _numba is not None else "numpy"

__all__ = [
    "BACKEND", "DECIDE", "FIXED", "SAMPLE", "UNIFORM",
    "butterfly", "f_op", "g_op", "genie_llr", "get_backend", "p_one", "sc_run",
]


def get_backend(name=None):
    """Return the kernel module for ``name`` ('numba' or 'numpy')."""
    name = name or BACKEND
    if name == "numpy":
        return _numpy
    if name == "numba":
        if _numba is None:
            raise RuntimeError("numba backend unavailable")
        return _numba
    raise ValueError(f"unknown backend {name!r}")


def _as2d(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    return a[None, :] if a.ndim == 1 else a


def butterfly(bits, backend=None):
    """x·G_n over GF(2) along the last axis; any leading shape."""
    bits = np.asarray(bits)
    flat = np.ascontiguousarray(bits.reshape(-1, bits.shape[-1]), dtype=np.uint8)
    return get_backend(backend).butterfly(flat).reshape(bits.shape)


def genie_llr(leaf, u, backend=None):
    leaf = _as2d(leaf, np.float64)
    u = _as2d(u, np.uint8)
    return get_backend(backend).genie_llr(leaf, u)


def sc_run(leaf, actions, fixed, rand, backend=None):
    leaf = _as2d(leaf, np.float64)
    B, N = leaf.shape
    actions = np.ascontiguousarray(np.broadcast_to(np.asarray(actions, dtype=np.int8), (B, N)))
    fixed = np.ascontiguousarray(np.broadcast_to(np.asarray(fixed, dtype=np.uint8), (B, N)))
    rand = np.ascontiguousarray(np.broadcast_to(np.asarray(rand, dtype=np.float64), (B, N)))
    return get_backend(backend).sc_run(leaf, actions, fixed, rand)
