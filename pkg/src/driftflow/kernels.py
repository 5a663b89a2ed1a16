"""Hot-kernel dispatch: compiled extension when built, NumPy otherwise.

Set ``DRIFTFLOW_PURE_PYTHON=1`` to force the NumPy fallback.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if not os.environ.get("DRIFTFLOW_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py


def upwind_update_1d(rho, u, ratio):
    return _impl.upwind_update_1d(np.ascontiguousarray(rho, dtype=float),
                                  np.ascontiguousarray(u, dtype=float), float(ratio))


def upwind_update_2d(rho, u, v, ratio_x, ratio_y):
    return _impl.upwind_update_2d(np.ascontiguousarray(rho, dtype=float),
                                  np.ascontiguousarray(u, dtype=float),
                                  np.ascontiguousarray(v, dtype=float),
                                  float(ratio_x), float(ratio_y))


def convolve_1d(rho, table, cell_volume):
    return _impl.convolve_1d(np.ascontiguousarray(rho, dtype=float),
                             np.ascontiguousarray(table, dtype=float), float(cell_volume))


def convolve_2d(rho, table, cell_volume):
    return _impl.convolve_2d(np.ascontiguousarray(rho, dtype=float),
                             np.ascontiguousarray(table, dtype=float), float(cell_volume))
