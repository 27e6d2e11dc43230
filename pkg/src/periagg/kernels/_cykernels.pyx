# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled dense kernels: matmul, row softmax, layer norm and their backward
passes, with a fixed left-to-right accumulation order for reproducibility."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()


def matmul(double[:, :] a, double[:, :] b):
    cdef Py_ssize_t n = a.shape[0], k = a.shape[1], m = b.shape[1]
    cdef Py_ssize_t i, j, p
    cdef double acc
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for p in range(k):
                acc += a[i, p] * b[p, j]
            out[i, j] = acc
    return out_arr


def softmax_rows(double[:, :] m):
    cdef Py_ssize_t rows = m.shape[0], cols = m.shape[1]
    cdef Py_ssize_t i, j
    cdef double mx, s
    out_arr = np.empty((rows, cols), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(rows):
        mx = m[i, 0]
        for j in range(1, cols):
            if m[i, j] > mx:
                mx = m[i, j]
        s = 0.0
        for j in range(cols):
            out[i, j] = exp(m[i, j] - mx)
            s += out[i, j]
        for j in range(cols):
            out[i, j] /= s
    return out_arr


def softmax_rows_grad(double[:, :] p, double[:, :] g):
    cdef Py_ssize_t rows = p.shape[0], cols = p.shape[1]
    cdef Py_ssize_t i, j
    cdef double dot
    out_arr = np.empty((rows, cols), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(rows):
        dot = 0.0
        for j in range(cols):
            dot += p[i, j] * g[i, j]
        for j in range(cols):
            out[i, j] = p[i, j] * (g[i, j] - dot)
    return out_arr


def layer_norm(double[:, :] m, double[:] gain, double[:] bias, double eps):
    cdef Py_ssize_t rows = m.shape[0], cols = m.shape[1]
    cdef Py_ssize_t i, j
    cdef double mu, var, d, inv
    out_arr = np.empty((rows, cols), dtype=np.float64)
    xhat_arr = np.empty((rows, cols), dtype=np.float64)
    inv_arr = np.empty(rows, dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] xhat = xhat_arr
    cdef double[::1] inv_std = inv_arr
    for i in range(rows):
        mu = 0.0
        for j in range(cols):
            mu += m[i, j]
        mu /= cols
        var = 0.0
        for j in range(cols):
            d = m[i, j] - mu
            var += d * d
        var /= cols
        inv = 1.0 / sqrt(var + eps)
        inv_std[i] = inv
        for j in range(cols):
            xhat[i, j] = (m[i, j] - mu) * inv
            out[i, j] = gain[j] * xhat[i, j] + bias[j]
    return out_arr, xhat_arr, inv_arr


def layer_norm_grad(double[:, :] g, double[:, :] xhat, double[:] inv_std,
                    double[:] gain):
    cdef Py_ssize_t rows = g.shape[0], cols = g.shape[1]
    cdef Py_ssize_t i, j
    cdef double m1, m2, dx
    dm_arr = np.empty((rows, cols), dtype=np.float64)
    dgain_arr = np.zeros(cols, dtype=np.float64)
    dbias_arr = np.zeros(cols, dtype=np.float64)
    cdef double[:, ::1] dm = dm_arr
    cdef double[::1] dgain = dgain_arr
    cdef double[::1] dbias = dbias_arr
    for i in range(rows):
        m1 = 0.0
        m2 = 0.0
        for j in range(cols):
            dgain[j] += g[i, j] * xhat[i, j]
            dbias[j] += g[i, j]
            dx = g[i, j] * gain[j]
            m1 += dx
            m2 += dx * xhat[i, j]
        m1 /= cols
        m2 /= cols
        for j in range(cols):
            dm[i, j] = (g[i, j] * gain[j] - m1 - xhat[i, j] * m2) * inv_std[i]
    return dm_arr, dgain_arr, dbias_arr
