# cython: boundscheck=False, wraparound=False, cdivision=True
"""Fused Cython kernels for the residual-feature map family.

Same contracts as `impl_py`; loops avoid materializing the N x m x d
difference tensor. Summation over centers runs in ascending j for both
backends so results agree to floating-point roundoff.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

BACKEND = "cython"


def rbf_weights(const double[:, ::1] points, const double[:, ::1] centers, double inv_two_h2):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t m = centers.shape[0]
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for k in range(d):
                diff = points[i, k] - centers[j, k]
                acc += diff * diff
            out[i, j] = exp(-acc * inv_two_h2)
    return out_arr


def rbf_apply(const double[:, ::1] points, const double[:, ::1] centers, double inv_two_h2,
              const double[:, ::1] coeffs):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t m = centers.shape[0]
    out_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double acc, diff, w
    for i in range(n):
        for k in range(d):
            out[i, k] = points[i, k]
        for j in range(m):
            acc = 0.0
            for k in range(d):
                diff = points[i, k] - centers[j, k]
                acc += diff * diff
            w = exp(-acc * inv_two_h2)
            for k in range(d):
                out[i, k] += w * coeffs[j, k]
    return out_arr


def rbf_coeff_grad(const double[:, ::1] points, const double[:, ::1] centers, double inv_two_h2,
                   const double[:, ::1] weighted_cotangents):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t m = centers.shape[0]
    out_arr = np.zeros((m, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double acc, diff, w
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for k in range(d):
                diff = points[i, k] - centers[j, k]
                acc += diff * diff
            w = exp(-acc * inv_two_h2)
            for k in range(d):
                out[j, k] += w * weighted_cotangents[i, k]
    return out_arr
