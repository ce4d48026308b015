# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: medoid scan, Gaussian kernel row, vote grid.

Same API as segtrack._numpy_kernels; selected by segtrack._backend.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()

BACKEND_NAME = "cython"


def medoid_argmin(cnp.float64_t[::1] rows, cnp.float64_t[::1] cols):
    cdef Py_ssize_t n = rows.shape[0]
    cdef Py_ssize_t i, j, best = 0
    cdef double s, dr, dc, best_sum = -1.0
    for i in range(n):
        s = 0.0
        for j in range(n):
            dr = rows[i] - rows[j]
            dc = cols[i] - cols[j]
            s += sqrt(dr * dr + dc * dc)
        if best_sum < 0.0 or s < best_sum:
            best_sum = s
            best = i
    return best


def kernel_scores(double cx, double cy, double sx, double sy,
                  cnp.float64_t[::1] ex, cnp.float64_t[::1] ey):
    cdef Py_ssize_t n = ex.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef cnp.float64_t[::1] o = out
    cdef Py_ssize_t i
    cdef double dx, dy
    for i in range(n):
        dx = cx - ex[i]
        dy = cy - ey[i]
        o[i] = exp(-(dx * dx) / sx - (dy * dy) / sy)
    return out


def accumulate_votes(cnp.int64_t[::1] vrows, cnp.int64_t[::1] vcols,
                     cnp.float64_t[::1] seed, Py_ssize_t h, Py_ssize_t w):
    counts = np.zeros((h, w), dtype=np.int64)
    best_seed = np.full((h, w), -1.0, dtype=np.float64)
    best_pix = np.full((h, w), -1, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] c = counts
    cdef cnp.float64_t[:, ::1] bs = best_seed
    cdef cnp.int64_t[:, ::1] bp = best_pix
    cdef Py_ssize_t i, r, q
    cdef Py_ssize_t n = vrows.shape[0]
    for i in range(n):
        r = vrows[i]
        q = vcols[i]
        c[r, q] += 1
        if seed[i] >= bs[r, q]:
            bs[r, q] = seed[i]
            bp[r, q] = i
    return counts, best_seed, best_pix
