# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos

cnp.import_array()


def nsdf_frames(x, starts, int win, int min_lag, int max_lag):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const long long[::1] sv = np.ascontiguousarray(starts, dtype=np.int64)
    cdef Py_ssize_t nframes = sv.shape[0]
    out = np.zeros((nframes, max_lag + 1), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t f, j, s
    cdef int t
    cdef double acc, m, a, b
    for f in range(nframes):
        s = sv[f]
        for t in range(min_lag, max_lag + 1):
            acc = 0.0
            m = 0.0
            for j in range(win - t):
                a = xv[s + j]
                b = xv[s + j + t]
                acc += a * b
                m += a * a + b * b
            if m > 0.0:
                ov[f, t] = 2.0 * acc / m
    return out


def additive(phase, amps):
    cdef const double[::1] pv = np.ascontiguousarray(phase, dtype=np.float64)
    cdef const double[::1] av = np.ascontiguousarray(amps, dtype=np.float64)
    cdef Py_ssize_t n = pv.shape[0]
    cdef Py_ssize_t nh = av.shape[0]
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, h
    cdef double s_prev, s_cur, s_next, c2, acc
    for i in range(n):
        # sin((h+1)p) = 2 cos(p) sin(hp) - sin((h-1)p)
        c2 = 2.0 * cos(pv[i])
        s_prev = 0.0
        s_cur = sin(pv[i])
        acc = 0.0
        for h in range(nh):
            acc += av[h] * s_cur
            s_next = c2 * s_cur - s_prev
            s_prev = s_cur
            s_cur = s_next
        ov[i] = acc
    return out
