"""Unit tests for the encoder: config, forward semantics, exact gradients."""

import numpy as np
import pytest

from periagg import encoder, gradcheck, kernels
from periagg.errors import ShapeError

SMALL = encoder.EncoderConfig(dim=8, heads=2, layers=2, mlp_hidden=16)


def test_config_validation():
    with pytest.raises(ValueError):
        encoder.EncoderConfig(dim=10, heads=3, layers=1)  # not divisible
    with pytest.raises(ValueError):
        encoder.EncoderConfig(dim=8, heads=0, layers=1)
    with pytest.raises(ValueError):
        encoder.EncoderConfig(dim=8, heads=2, layers=1, ln_eps=0.0)
    cfg = encoder.EncoderConfig(dim=8, heads=2, layers=1)
    assert cfg.mlp_hidden == 32  # 4 * dim default
    assert cfg.head_dim == 4


def test_init_params_shapes_and_structure():
    params = encoder.init_params(SMALL, seed=0)
    assert len(params.layers) == SMALL.layers
    for lp in params.layers:
        assert lp.wq.shape == (2, 8, 4)
        assert lp.wo.shape == (8, 8)
        assert lp.w1.shape == (8, 16)
        # shared query/key draw, zeroed output projections
        np.testing.assert_array_equal(lp.wq, lp.wk)
        assert not np.array_equal(lp.wq, lp.wv)
        assert np.count_nonzero(lp.wo) == 0
        assert np.count_nonzero(lp.w2) == 0
        np.testing.assert_array_equal(lp.ln_attn_gain, np.ones(8))
        np.testing.assert_array_equal(lp.b1, np.zeros(16))


def test_init_params_deterministic_per_seed():
    a = encoder.init_params(SMALL, seed=3)
    b = encoder.init_params(SMALL, seed=3)
    c = encoder.init_params(SMALL, seed=4)
    for (_, x), (_, y) in zip(encoder.iter_arrays(a), encoder.iter_arrays(b)):
        np.testing.assert_array_equal(x, y)
    assert any(
        not np.array_equal(x, y)
        for (_, x), (_, y) in zip(encoder.iter_arrays(a), encoder.iter_arrays(c))
    )


def test_untrained_encoder_is_identity():
    """Zeroed output projections collapse both residual branches."""
    rng = np.random.default_rng(0)
    params = encoder.init_params(SMALL, seed=1)
    f = rng.standard_normal((5, SMALL.dim))
    out, _, _ = encoder.forward(params, SMALL, f)
    np.testing.assert_array_equal(out, f)


def test_forward_shapes_and_attention_stochasticity():
    rng = np.random.default_rng(1)
    params = encoder.init_params(SMALL, seed=0)
    f = rng.standard_normal((6, SMALL.dim))
    out, cache, attn = encoder.forward(params, SMALL, f)
    assert out.shape == f.shape
    assert cache is None
    assert len(attn) == SMALL.layers
    for a in attn:
        assert a.shape == (SMALL.heads, 6, 6)
        np.testing.assert_allclose(a.sum(axis=2), 1.0, atol=1e-12)


def test_forward_input_validation():
    params = encoder.init_params(SMALL, seed=0)
    with pytest.raises(ShapeError):
        encoder.forward(params, SMALL, np.zeros((3, SMALL.dim + 1)))
    with pytest.raises(ShapeError):
        encoder.forward(params, SMALL, np.zeros((0, SMALL.dim)))
    with pytest.raises(ShapeError):
        encoder.forward(params, SMALL, np.zeros(SMALL.dim))


def test_no_positional_encoding_permutation_equivariance():
    """Permuting input rows permutes output rows identically."""
    rng = np.random.default_rng(2)
    params = encoder.init_params(SMALL, seed=5)
    # nonzero output projections so the layers actually mix tokens
    for lp in params.layers:
        lp.wo[...] = rng.standard_normal(lp.wo.shape) * 0.2
        lp.w2[...] = rng.standard_normal(lp.w2.shape) * 0.2
    f = rng.standard_normal((7, SMALL.dim))
    perm = rng.permutation(7)
    out, _, _ = encoder.forward(params, SMALL, f)
    out_p, _, _ = encoder.forward(params, SMALL, f[perm])
    np.testing.assert_allclose(out_p, out[perm], rtol=1e-12, atol=1e-12)


def test_scalar_attention_reference_agrees_with_matrix_path():
    """softmax(F F^T) F computed with the kernels equals the looped oracle."""
    rng = np.random.default_rng(3)
    for _ in range(10):
        f = rng.standard_normal((rng.integers(2, 7), rng.integers(2, 6)))
        matrix = kernels.matmul(
            kernels.softmax_rows(kernels.matmul(f, np.ascontiguousarray(f.T))), f
        )
        looped = encoder.attention_single_head_reference(f)
        np.testing.assert_allclose(matrix, looped, atol=1e-13)


def test_backward_matches_finite_differences():
    for seed in range(3):
        errors = gradcheck.check_encoder(seed)
        worst = max(errors.values())
        assert worst < 1e-6, f"seed {seed}: {errors}"


def test_backward_requires_cache_and_matching_shape():
    rng = np.random.default_rng(4)
    params = encoder.init_params(SMALL, seed=0)
    f = rng.standard_normal((4, SMALL.dim))
    out, cache, _ = encoder.forward(params, SMALL, f, cache_mode=True)
    with pytest.raises(ValueError):
        encoder.backward(None, np.zeros_like(out))
    with pytest.raises(ShapeError):
        encoder.backward(cache, np.zeros((5, SMALL.dim)))


def test_iter_arrays_order_is_stable():
    params = encoder.init_params(SMALL, seed=0)
    names = [name for name, _ in encoder.iter_arrays(params)]
    assert names[:7] == [
        "layer0.head0.wq",
        "layer0.head0.wk",
        "layer0.head0.wv",
        "layer0.head1.wq",
        "layer0.head1.wk",
        "layer0.head1.wv",
        "layer0.wo",
    ]
    assert names[-1] == "layer1.b2"
    assert len(names) == 2 * (3 * SMALL.heads + 9)


def test_zeros_like_and_add_params():
    params = encoder.init_params(SMALL, seed=0)
    acc = encoder.zeros_like_params(params)
    encoder.add_params_(acc, params)
    encoder.add_params_(acc, params)
    for (_, a), (_, p) in zip(encoder.iter_arrays(acc), encoder.iter_arrays(params)):
        np.testing.assert_allclose(a, 2.0 * p, rtol=1e-15)


def test_gelu_matches_tanh_formula():
    u = np.linspace(-4, 4, 101)
    c = np.sqrt(2.0 / np.pi)
    expected = 0.5 * u * (1.0 + np.tanh(c * (u + 0.044715 * u**3)))
    np.testing.assert_allclose(encoder._gelu(u), expected, atol=1e-14)
    # derivative against central differences
    h = 1e-6
    num = (encoder._gelu(u + h) - encoder._gelu(u - h)) / (2 * h)
    np.testing.assert_allclose(encoder._gelu_grad(u), num, atol=1e-8)
