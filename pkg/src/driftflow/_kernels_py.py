"""Pure NumPy versions of the hot kernels.

Used when the compiled ``_kernels`` extension is not available; both
implementations share signatures and are cross-checked in the tests.
"""
import numpy as np


def upwind_update_1d(rho, u, ratio):
    """One explicit upwind update ``rho - ratio * (F[1:] - F[:-1])``.

    ``u`` holds the n+1 face velocities (boundary faces included), ``ratio``
    is ``dt / dz``.
    """
    flux = np.zeros(u.shape[0])
    up = np.maximum(u[1:-1], 0.0)
    um = np.minimum(u[1:-1], 0.0)
    flux[1:-1] = up * rho[:-1] + um * rho[1:]
    return rho - ratio * (flux[1:] - flux[:-1])


def upwind_update_2d(rho, u, v, ratio_x, ratio_y):
    """Unsplit 2D upwind update with faces ``u`` (n1+1, n2) and ``v`` (n1, n2+1)."""
    fx = np.zeros(u.shape)
    fy = np.zeros(v.shape)
    fx[1:-1] = np.maximum(u[1:-1], 0.0) * rho[:-1] + np.minimum(u[1:-1], 0.0) * rho[1:]
    fy[:, 1:-1] = np.maximum(v[:, 1:-1], 0.0) * rho[:, :-1] + np.minimum(v[:, 1:-1], 0.0) * rho[:, 1:]
    return rho - ratio_x * (fx[1:] - fx[:-1]) - ratio_y * (fy[:, 1:] - fy[:, :-1])


def convolve_1d(rho, table, cell_volume):
    """``out[i] = sum_j table[i - j + n - 1] * rho[j] * dV`` by direct summation."""
    n = rho.shape[0]
    idx = np.arange(n)[:, None] - np.arange(n)[None, :] + n - 1
    return table[idx] @ rho * cell_volume


def convolve_2d(rho, table, cell_volume):
    n1, n2 = rho.shape
    i1 = np.arange(n1)[:, None] - np.arange(n1)[None, :] + n1 - 1
    i2 = np.arange(n2)[:, None] - np.arange(n2)[None, :] + n2 - 1
    # table[i1[a, c], i2[b, d]] * rho[c, d]
    full = table[i1[:, None, :, None], i2[None, :, None, :]]
    return np.einsum("abcd,cd->ab", full, rho) * cell_volume
