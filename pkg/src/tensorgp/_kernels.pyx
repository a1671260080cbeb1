# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Signatures mirror ``_kernels_py``."""
import numpy as np

from libc.math cimport exp, sqrt, M_PI


def sqe_gram(const double[:, ::1] points, const double[::1] q, double jitter):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    if q.shape[0] != d:
        raise ValueError(f"points have dimension {d} but q has length {q.shape[0]}")
    out = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] k = out
    cdef Py_ssize_t i, j, l
    cdef double acc, diff
    with nogil:
        for i in range(n):
            k[i, i] = 1.0 + jitter
            for j in range(i):
                acc = 0.0
                for l in range(d):
                    diff = points[i, l] - points[j, l]
                    acc = acc + q[l] * diff * diff
                acc = exp(-acc)
                k[i, j] = acc
                k[j, i] = acc
    return out


def gaussian_kde_eval(const double[::1] samples, const double[::1] grid, double bandwidth):
    cdef Py_ssize_t n = samples.shape[0]
    cdef Py_ssize_t g = grid.shape[0]
    out = np.zeros(g, dtype=np.float64)
    cdef double[::1] dens = out
    cdef Py_ssize_t i, j
    cdef double z, acc
    cdef double inv_h = 1.0 / bandwidth
    cdef double norm = 1.0 / (n * bandwidth * sqrt(2.0 * M_PI))
    with nogil:
        for j in range(g):
            acc = 0.0
            for i in range(n):
                z = (grid[j] - samples[i]) * inv_h
                if z < 40.0 and z > -40.0:
                    acc = acc + exp(-0.5 * z * z)
            dens[j] = acc * norm
    return out
