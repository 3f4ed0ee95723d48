"""Kernel backend selection.

The compiled extension is used when it imports; set
``GAUSSIAN_EMS_PURE_PYTHON=1`` to force the NumPy fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
if os.environ.get("GAUSSIAN_EMS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py

nsdf_frames = _impl.nsdf_frames
additive = _impl.additive

__all__ = ["BACKEND", "nsdf_frames", "additive"]
