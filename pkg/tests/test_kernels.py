"""Unit tests for the dense numeric primitives and their two backends."""

import numpy as np
import pytest

from periagg import kernels
from periagg.errors import ShapeError
from periagg.kernels import _np_backend


def test_backend_is_reported():
    assert kernels.BACKEND in ("numpy", "cython")


def test_matmul_matches_numpy():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = rng.standard_normal((rng.integers(1, 9), rng.integers(1, 9)))
        b = rng.standard_normal((a.shape[1], rng.integers(1, 9)))
        np.testing.assert_allclose(kernels.matmul(a, b), a @ b, rtol=1e-13)


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        kernels.matmul(np.zeros((2, 3)), np.zeros((4, 2)))
    with pytest.raises(ShapeError):
        kernels.matmul(np.zeros(3), np.zeros((3, 2)))


def test_matmul_grad_matches_closed_form():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((4, 3))
    b = rng.standard_normal((3, 5))
    g = rng.standard_normal((4, 5))
    da, db = kernels.matmul_grad(a, b, g)
    np.testing.assert_allclose(da, g @ b.T, rtol=1e-13)
    np.testing.assert_allclose(db, a.T @ g, rtol=1e-13)


def test_softmax_rows_sum_to_one_and_monotone():
    rng = np.random.default_rng(2)
    m = rng.standard_normal((50, 7)) * 5
    p = kernels.softmax_rows(m)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert (p > 0).all()
    # the largest logit gets the largest probability, row by row
    assert (np.argmax(p, axis=1) == np.argmax(m, axis=1)).all()


def test_softmax_rows_shift_invariance():
    rng = np.random.default_rng(3)
    m = rng.standard_normal((4, 6))
    shifted = m + rng.standard_normal((4, 1)) * 100
    np.testing.assert_allclose(
        kernels.softmax_rows(m), kernels.softmax_rows(shifted), atol=1e-12
    )


def test_softmax_extreme_logits_stay_finite():
    m = np.array([[1000.0, -1000.0, 0.0]])
    p = kernels.softmax_rows(m)
    assert np.isfinite(p).all()
    np.testing.assert_allclose(p.sum(), 1.0, atol=1e-12)


def test_layer_norm_matches_manual():
    rng = np.random.default_rng(4)
    m = rng.standard_normal((6, 9))
    gain = rng.standard_normal(9)
    bias = rng.standard_normal(9)
    eps = 1e-5
    out = kernels.layer_norm(m, gain, bias, eps)
    mu = m.mean(axis=1, keepdims=True)
    var = m.var(axis=1, keepdims=True)  # population variance
    expected = (m - mu) / np.sqrt(var + eps) * gain + bias
    np.testing.assert_allclose(out, expected, rtol=1e-12, atol=1e-12)


def test_layer_norm_rows_standardized_with_unit_gain():
    rng = np.random.default_rng(5)
    m = rng.standard_normal((8, 16)) * 3 + 2
    out = kernels.layer_norm(m, np.ones(16), np.zeros(16))
    np.testing.assert_allclose(out.mean(axis=1), 0.0, atol=1e-10)
    np.testing.assert_allclose(out.std(axis=1), 1.0, atol=1e-3)


def test_layer_norm_validation():
    with pytest.raises(ShapeError):
        kernels.layer_norm(np.zeros((2, 3)), np.zeros(4), np.zeros(3))
    with pytest.raises(ValueError):
        kernels.layer_norm(np.zeros((2, 3)), np.zeros(3), np.zeros(3), eps=0.0)


def test_backward_primitives_match_finite_differences():
    from periagg import gradcheck

    for seed in range(5):
        for name, err in gradcheck.check_kernels(seed).items():
            assert err < 1e-6, f"{name} at seed {seed}: {err}"


def test_active_backend_agrees_with_numpy_reference():
    """Whichever backend is active must match the plain numpy one closely."""
    rng = np.random.default_rng(7)
    a = np.ascontiguousarray(rng.standard_normal((5, 4)))
    b = np.ascontiguousarray(rng.standard_normal((4, 6)))
    np.testing.assert_allclose(
        kernels.matmul(a, b), _np_backend.matmul(a, b), rtol=1e-13, atol=1e-13
    )
    m = np.ascontiguousarray(rng.standard_normal((5, 6)))
    np.testing.assert_allclose(
        kernels.softmax_rows(m), _np_backend.softmax_rows(m), rtol=1e-13, atol=1e-14
    )
    gain = rng.standard_normal(6)
    bias = rng.standard_normal(6)
    got = kernels.layer_norm_cached(m, gain, bias, 1e-5)
    want = _np_backend.layer_norm(m, gain, bias, 1e-5)
    for g, w in zip(got, want):
        np.testing.assert_allclose(g, w, rtol=1e-12, atol=1e-13)


def test_kernels_are_bit_deterministic():
    rng = np.random.default_rng(8)
    a = rng.standard_normal((16, 16))
    b = rng.standard_normal((16, 16))
    first = kernels.matmul(a, b)
    for _ in range(3):
        assert np.array_equal(kernels.matmul(a, b), first)
