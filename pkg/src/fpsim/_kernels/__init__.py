"""Kernel backend selection.

The compiled extension is preferred; the pure-numpy fallback is used when
the extension is missing or when FPSIM_PURE_PYTHON=1. Both expose the same
eight functions with the same numerics contract (see numpy_backend).
"""

from __future__ import annotations

import os
import warnings

from . import numpy_backend


def load_compiled():
    """Return the compiled kernel module, or None if it cannot be imported."""
    try:
        from . import _core
    except ImportError:
        return None
    return _core


if os.environ.get("FPSIM_PURE_PYTHON") == "1":
    _active = numpy_backend
else:
    _active = load_compiled()
    if _active is None:
        warnings.warn(
            "fpsim compiled kernels unavailable; using the (much slower) "
            "numpy fallback. Reinstall with a C toolchain to build them.",
            stacklevel=2,
        )
        _active = numpy_backend

BACKEND = _active.NAME

conv2d_fwd = _active.conv2d_fwd
conv2d_bwd_input = _active.conv2d_bwd_input
conv2d_bwd_params = _active.conv2d_bwd_params
dense_fwd = _active.dense_fwd
dense_bwd_input = _active.dense_bwd_input
dense_bwd_params = _active.dense_bwd_params
maxpool2d_fwd = _active.maxpool2d_fwd
maxpool2d_scatter = _active.maxpool2d_scatter
