"""Numpy implementation of the dense kernels.

This is the fallback backend when the compiled extension is unavailable.
All functions assume float64 inputs with matching shapes; validation lives
in the package-level wrappers.
"""

import numpy as np


def matmul(a, b):
    return a @ b


def softmax_rows(m):
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_grad(p, g):
    # p is the forward output; jacobian-vector product of row-wise softmax
    return p * (g - np.sum(p * g, axis=1, keepdims=True))


def layer_norm(m, gain, bias, eps):
    mu = m.mean(axis=1, keepdims=True)
    var = m.var(axis=1, keepdims=True)  # population (1/D) normalization
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (m - mu) * inv_std
    return gain * xhat + bias, xhat, inv_std[:, 0]


def layer_norm_grad(g, xhat, inv_std, gain):
    dgain = (g * xhat).sum(axis=0)
    dbias = g.sum(axis=0)
    dxhat = g * gain
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dm = (dxhat - m1 - xhat * m2) * inv_std[:, None]
    return dm, dgain, dbias
