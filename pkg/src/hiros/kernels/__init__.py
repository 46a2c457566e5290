"""Kernel backend selection.

The compiled Cython kernels are preferred when the extension built; the
numpy implementation is the fallback and the reference the compiled one is
tested against.  ``HIROS_KERNELS=numpy|cython`` forces a choice (useful for
the benchmark and for debugging a suspected kernel issue).
"""

import logging
import os

from . import numpy_backend

log = logging.getLogger(__name__)

try:
    from . import _ckernels
except ImportError:  # extension not built; pure-python install
    _ckernels = None

_FORCED = os.environ.get("HIROS_KERNELS", "").strip().lower()

if _FORCED == "numpy":
    _active = numpy_backend
elif _FORCED == "cython":
    if _ckernels is None:
        raise ImportError(
            "HIROS_KERNELS=cython but the compiled extension is not available"
        )
    _active = _ckernels
elif _ckernels is not None:
    _active = _ckernels
else:
    log.info("compiled kernels unavailable, using numpy fallback")
    _active = numpy_backend

conv3d_forward = _active.conv3d_forward
conv3d_backward_input = _active.conv3d_backward_input
conv3d_backward_kernel = _active.conv3d_backward_kernel
maxpool3d_forward = _active.maxpool3d_forward
maxpool3d_backward = _active.maxpool3d_backward


def active_backend():
    """Name of the backend in use: 'cython' or 'numpy'."""
    return _active.NAME


def available_backends():
    names = ["numpy"]
    if _ckernels is not None:
        names.insert(0, "cython")
    return names


def get_backend(name):
    """Fetch a backend module by name regardless of the active selection."""
    if name == "numpy":
        return numpy_backend
    if name == "cython":
        if _ckernels is None:
            raise ValueError("cython backend was not built")
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")
