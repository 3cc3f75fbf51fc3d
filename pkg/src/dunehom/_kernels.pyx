# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pointwise and stencil kernels; see ``_kernels_py`` for the reference."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def transport_coefficients(const double[:, ::1] u1, const double[:, ::1] u2,
                           const double[:, ::1] fa, const double[:, ::1] fc,
                           double g0, double g1, double g2):
    cdef Py_ssize_t n0 = u1.shape[0], n1 = u1.shape[1], i, j
    A = np.empty((n0, n1))
    C1 = np.empty((n0, n1))
    C2 = np.empty((n0, n1))
    cdef double[:, ::1] a = A, c1 = C1, c2 = C2
    cdef double s, inv, w
    for i in range(n0):
        for j in range(n1):
            s = u1[i, j] * u1[i, j] + u2[i, j] * u2[i, j]
            inv = 1.0 / (1.0 + s)
            a[i, j] = fa[i, j] * (g0 + g1 * s * inv)
            w = fc[i, j] * g2 * sqrt(s) * inv
            c1[i, j] = w * u1[i, j]
            c2[i, j] = w * u2[i, j]
    return A, C1, C2


def fd_div_flux(const double[:, ::1] coef, const double[:, ::1] z, double h):
    cdef Py_ssize_t n0 = z.shape[0], n1 = z.shape[1], i, j, ip, im, jp, jm
    out = np.empty((n0, n1))
    cdef double[:, ::1] o = out
    cdef double inv_h2 = 1.0 / (h * h), zc, cc
    for i in range(n0):
        ip = i + 1 if i + 1 < n0 else 0
        im = i - 1 if i > 0 else n0 - 1
        for j in range(n1):
            jp = j + 1 if j + 1 < n1 else 0
            jm = j - 1 if j > 0 else n1 - 1
            zc = z[i, j]
            cc = coef[i, j]
            o[i, j] = inv_h2 * 0.5 * (
                (cc + coef[ip, j]) * (z[ip, j] - zc)
                - (cc + coef[im, j]) * (zc - z[im, j])
                + (cc + coef[i, jp]) * (z[i, jp] - zc)
                - (cc + coef[i, jm]) * (zc - z[i, jm]))
    return out


def fd_centered_div(const double[:, ::1] c1, const double[:, ::1] c2, double h):
    cdef Py_ssize_t n0 = c1.shape[0], n1 = c1.shape[1], i, j, ip, im, jp, jm
    out = np.empty((n0, n1))
    cdef double[:, ::1] o = out
    cdef double inv = 0.5 / h
    for i in range(n0):
        ip = i + 1 if i + 1 < n0 else 0
        im = i - 1 if i > 0 else n0 - 1
        for j in range(n1):
            jp = j + 1 if j + 1 < n1 else 0
            jm = j - 1 if j > 0 else n1 - 1
            o[i, j] = inv * (c1[ip, j] - c1[im, j] + c2[i, jp] - c2[i, jm])
    return out
