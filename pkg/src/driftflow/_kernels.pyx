# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled upwind and convolution kernels (see ``_kernels_py`` for the reference)."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def upwind_update_1d(const double[::1] rho, const double[::1] u, double ratio):
    cdef Py_ssize_t n = rho.shape[0]
    cdef Py_ssize_t i
    cdef double f_left = 0.0, f_right, w
    out = np.empty(n)
    cdef double[::1] o = out
    for i in range(n):
        if i == n - 1:
            f_right = 0.0
        else:
            w = u[i + 1]
            f_right = w * rho[i] if w > 0 else w * rho[i + 1]
        o[i] = rho[i] - ratio * (f_right - f_left)
        f_left = f_right
    return out


def upwind_update_2d(const double[:, ::1] rho, const double[:, ::1] u,
                     const double[:, ::1] v, double ratio_x, double ratio_y):
    cdef Py_ssize_t n1 = rho.shape[0], n2 = rho.shape[1]
    cdef Py_ssize_t i, j
    cdef double w, fl, fr, fb, ft
    out = np.empty((n1, n2))
    cdef double[:, ::1] o = out
    for i in range(n1):
        for j in range(n2):
            if i == 0:
                fl = 0.0
            else:
                w = u[i, j]
                fl = w * rho[i - 1, j] if w > 0 else w * rho[i, j]
            if i == n1 - 1:
                fr = 0.0
            else:
                w = u[i + 1, j]
                fr = w * rho[i, j] if w > 0 else w * rho[i + 1, j]
            if j == 0:
                fb = 0.0
            else:
                w = v[i, j]
                fb = w * rho[i, j - 1] if w > 0 else w * rho[i, j]
            if j == n2 - 1:
                ft = 0.0
            else:
                w = v[i, j + 1]
                ft = w * rho[i, j] if w > 0 else w * rho[i, j + 1]
            o[i, j] = rho[i, j] - ratio_x * (fr - fl) - ratio_y * (ft - fb)
    return out


def convolve_1d(const double[::1] rho, const double[::1] table, double cell_volume):
    cdef Py_ssize_t n = rho.shape[0]
    cdef Py_ssize_t i, j
    cdef double acc
    out = np.empty(n)
    cdef double[::1] o = out
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += table[i - j + n - 1] * rho[j]
        o[i] = acc * cell_volume
    return out


def convolve_2d(const double[:, ::1] rho, const double[:, ::1] table, double cell_volume):
    cdef Py_ssize_t n1 = rho.shape[0], n2 = rho.shape[1]
    cdef Py_ssize_t a, b, c, d
    cdef double acc
    out = np.empty((n1, n2))
    cdef double[:, ::1] o = out
    for a in range(n1):
        for b in range(n2):
            acc = 0.0
            for c in range(n1):
                for d in range(n2):
                    acc += table[a - c + n1 - 1, b - d + n2 - 1] * rho[c, d]
            o[a, b] = acc * cell_volume
    return out
