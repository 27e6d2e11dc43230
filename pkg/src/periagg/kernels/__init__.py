"""Deterministic dense numeric primitives.

Two interchangeable backends provide the inner loops: a Cython extension
(built at install time) and a plain numpy implementation. The compiled one
is preferred when importable; set ``PERIAGG_KERNEL_BACKEND=numpy`` or
``=cython`` to force a choice. Whichever backend is active, results are
bit-reproducible across runs on the same machine.

All matrices are C-ordered float64 numpy arrays. Forward semantics:

* ``matmul`` -- standard product with a fixed accumulation order
* ``softmax_rows`` -- row-wise softmax with max subtraction
* ``layer_norm`` -- per-row standardization (population variance, eps inside
  the square root), then gain/bias

Each forward op has a closed-form backward companion. Finiteness of inputs
is a caller responsibility; shape mismatches raise :class:`ShapeError`.
"""

import os

import numpy as np

from periagg.errors import ShapeError

from . import _np_backend

_requested = os.environ.get("PERIAGG_KERNEL_BACKEND", "").strip().lower()
if _requested == "numpy":
    _impl = _np_backend
    BACKEND = "numpy"
else:
    try:
        from . import _cykernels as _impl

        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        _impl = _np_backend
        BACKEND = "numpy"


def _as_matrix(x, name):
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def _as_vector(x, name, length):
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (length,):
        raise ShapeError(f"{name} must have shape ({length},), got {v.shape}")
    return v


def matmul(a, b):
    """Matrix product a @ b with deterministic accumulation."""
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} x {b.shape}")
    return _impl.matmul(a, b)


def matmul_grad(a, b, upstream):
    """Gradients of sum(upstream * (a @ b)) w.r.t. a and b."""
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    g = _as_matrix(upstream, "upstream")
    if g.shape != (a.shape[0], b.shape[1]) or a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul_grad: inconsistent shapes {a.shape}, {b.shape}, {g.shape}"
        )
    da = _impl.matmul(g, np.ascontiguousarray(b.T))
    db = _impl.matmul(np.ascontiguousarray(a.T), g)
    return da, db


def softmax_rows(m):
    """Row-wise softmax; each output row sums to 1."""
    return _impl.softmax_rows(_as_matrix(m, "m"))


def softmax_rows_grad(out, upstream):
    """Backward of softmax_rows given its forward output ``out``."""
    out = _as_matrix(out, "out")
    g = _as_matrix(upstream, "upstream")
    if out.shape != g.shape:
        raise ShapeError(f"softmax_rows_grad: {out.shape} vs {g.shape}")
    return _impl.softmax_rows_grad(out, g)


def layer_norm(m, gain, bias, eps=1e-5):
    """Per-row layer normalization scaled by gain and shifted by bias."""
    out, _, _ = layer_norm_cached(m, gain, bias, eps)
    return out


def layer_norm_cached(m, gain, bias, eps=1e-5):
    """layer_norm plus the (xhat, inv_std) cache its backward needs."""
    m = _as_matrix(m, "m")
    gain = _as_vector(gain, "gain", m.shape[1])
    bias = _as_vector(bias, "bias", m.shape[1])
    if eps <= 0:
        raise ValueError("eps must be positive")
    return _impl.layer_norm(m, gain, bias, float(eps))


def layer_norm_grad(upstream, xhat, inv_std, gain):
    """Gradients of layer_norm w.r.t. its input, gain and bias."""
    g = _as_matrix(upstream, "upstream")
    xhat = _as_matrix(xhat, "xhat")
    if g.shape != xhat.shape:
        raise ShapeError(f"layer_norm_grad: {g.shape} vs {xhat.shape}")
    inv_std = _as_vector(inv_std, "inv_std", g.shape[0])
    gain = _as_vector(gain, "gain", g.shape[1])
    return _impl.layer_norm_grad(g, xhat, inv_std, gain)
