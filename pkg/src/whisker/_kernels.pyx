# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled core of the kicked-saddle splitting integrator.

Same contract as ``whisker._kernels_py.split_flow``; loops run per point
so the whole composition stays in registers.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, exp, M_PI

cnp.import_array()


def split_flow(z, double eps, double lam, double shear, double h, long nsteps,
               kick, drift, bint jac=False):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] zin = np.ascontiguousarray(z, dtype=np.float64)
    if zin.shape[1] != 4:
        raise ValueError("points must have shape (n, 4)")
    cdef double[::1] kc = np.ascontiguousarray(kick, dtype=np.float64)
    cdef double[::1] dc = np.ascontiguousarray(drift, dtype=np.float64)
    cdef Py_ssize_t n = zin.shape[0]
    cdef Py_ssize_t nd = dc.shape[0]
    out = np.empty((n, 4), dtype=np.float64)
    cdef double[:, ::1] zo = out
    cdef double[:, :, ::1] mo
    jac_out = None
    if jac:
        jac_out = np.empty((n, 4, 4), dtype=np.float64)
        mo = jac_out
    cdef double two_pi = 2.0 * M_PI
    cdef double x, y, u, v, tau, sigma, s2, c2, a, b, eu
    cdef double m[4][4]
    cdef Py_ssize_t p, step, stage, i, j
    for p in range(n):
        x = zin[p, 0]
        y = zin[p, 1]
        u = zin[p, 2]
        v = zin[p, 3]
        if jac:
            for i in range(4):
                for j in range(4):
                    m[i][j] = 1.0 if i == j else 0.0
        for step in range(nsteps):
            for stage in range(nd + 1):
                tau = kc[stage] * h
                if tau != 0.0:
                    s2 = sin(two_pi * x)
                    c2 = cos(two_pi * x)
                    if jac:
                        a = two_pi * two_pi * eps * tau * c2 * (1.0 + u)
                        b = two_pi * eps * tau * s2
                        for j in range(4):
                            m[1][j] += a * m[0][j] + b * m[2][j]
                            m[3][j] += b * m[0][j]
                    y = y + two_pi * eps * tau * s2 * (1.0 + u)
                    v = v - eps * tau * c2
                if stage == nd:
                    break
                sigma = dc[stage] * h
                eu = exp(lam * sigma)
                x = x + shear * sigma * y
                u = u * eu
                v = v / eu
                if jac:
                    for j in range(4):
                        m[0][j] += shear * sigma * m[1][j]
                        m[2][j] *= eu
                        m[3][j] /= eu
        zo[p, 0] = x
        zo[p, 1] = y
        zo[p, 2] = u
        zo[p, 3] = v
        if jac:
            for i in range(4):
                for j in range(4):
                    mo[p, i, j] = m[i][j]
    return out, jac_out
