"""Central finite-difference verification of every backward path.

Used by the test suite and the `grad-check` CLI command. Errors are reported
as max |analytic - numeric| / max(|analytic|, |numeric|, 1), which behaves
like a relative error for O(1) gradients and like an absolute error below
the finite-difference noise floor.
"""

import numpy as np

from periagg import encoder, kernels, training
from periagg.aggregator import TokenSet

DEFAULT_STEP = 1e-5


def max_rel_error(analytic, numeric, floor=1.0):
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def central_difference(f, x, step=DEFAULT_STEP):
    """Numeric gradient of scalar f at array x, perturbing in place."""
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + step
        hi = f()
        x[idx] = orig - step
        lo = f()
        x[idx] = orig
        grad[idx] = (hi - lo) / (2.0 * step)
        it.iternext()
    return grad


def check_kernels(seed, step=DEFAULT_STEP):
    """Finite-difference check of the three kernel backward primitives."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2))
    w = rng.standard_normal((3, 2))  # fixed weights make the loss scalar

    da, db = kernels.matmul_grad(a, b, w)
    da_num = central_difference(lambda: float(np.sum(w * kernels.matmul(a, b))), a, step)
    db_num = central_difference(lambda: float(np.sum(w * kernels.matmul(a, b))), b, step)
    errors = {
        "matmul.a": max_rel_error(da, da_num),
        "matmul.b": max_rel_error(db, db_num),
    }

    m = rng.standard_normal((3, 5))
    wm = rng.standard_normal((3, 5))
    p = kernels.softmax_rows(m)
    dm = kernels.softmax_rows_grad(p, wm)
    dm_num = central_difference(
        lambda: float(np.sum(wm * kernels.softmax_rows(m))), m, step
    )
    errors["softmax_rows.m"] = max_rel_error(dm, dm_num)

    x = rng.standard_normal((3, 6))
    gain = rng.standard_normal(6)
    bias = rng.standard_normal(6)
    eps = 1e-5
    _, xhat, inv_std = kernels.layer_norm_cached(x, gain, bias, eps)
    up = rng.standard_normal((3, 6))
    dx, dgain, dbias = kernels.layer_norm_grad(up, xhat, inv_std, gain)

    def ln_loss():
        return float(np.sum(up * kernels.layer_norm(x, gain, bias, eps)))

    errors["layer_norm.m"] = max_rel_error(dx, central_difference(ln_loss, x, step))
    errors["layer_norm.gain"] = max_rel_error(
        dgain, central_difference(ln_loss, gain, step)
    )
    errors["layer_norm.bias"] = max_rel_error(
        dbias, central_difference(ln_loss, bias, step)
    )
    return errors


def check_encoder(seed, cfg=None, tokens=4, step=DEFAULT_STEP):
    """Encoder backward vs finite differences, per parameter group."""
    if cfg is None:
        cfg = encoder.EncoderConfig(dim=8, heads=2, layers=1, mlp_hidden=16)
    rng = np.random.default_rng(seed)
    params = encoder.init_params(cfg, seed)
    f = rng.standard_normal((tokens, cfg.dim))
    upstream = rng.standard_normal((tokens, cfg.dim))

    def loss():
        out, _, _ = encoder.forward(params, cfg, f)
        return float(np.sum(upstream * out))

    out, cache, _ = encoder.forward(params, cfg, f, cache_mode=True)
    grads, dinput = encoder.backward(cache, upstream)
    errors = {}
    for (name, g), (_, p) in zip(
        encoder.iter_arrays(grads), encoder.iter_arrays(params)
    ):
        errors[name] = max_rel_error(g, central_difference(loss, p, step))
    errors["input"] = max_rel_error(dinput, central_difference(loss, f, step))
    return errors


def check_pipeline(seed, step=DEFAULT_STEP, label=None):
    """Encoder -> aggregate -> cosine embedding loss gradient check.

    Runs the small D=8, H=2, L=1, K=3 configuration; per-parameter-group max
    errors are returned. Label alternates genuine/impostor by seed unless
    forced.
    """
    cfg = encoder.EncoderConfig(dim=8, heads=2, layers=1, mlp_hidden=16)
    rng = np.random.default_rng(seed)
    params = encoder.init_params(cfg, seed)
    if label is None:
        label = 1 if seed % 2 == 0 else -1
    ts = TokenSet(
        still=rng.standard_normal(cfg.dim),
        frames=rng.standard_normal((3, cfg.dim)),
        subject_id_still="a",
        subject_id_video="a" if label == 1 else "b",
    )
    # margin -1 keeps the impostor hinge active regardless of the cosine
    margin = 0.5 if label == 1 else -1.0
    pair = training.PairSample(tokens=ts, label=label)

    def loss():
        value, _ = training.pair_loss_and_grads(params, cfg, pair, margin)
        return value

    _, grads = training.pair_loss_and_grads(params, cfg, pair, margin)
    errors = {}
    for (name, g), (_, p) in zip(
        encoder.iter_arrays(grads), encoder.iter_arrays(params)
    ):
        errors[name] = max_rel_error(g, central_difference(loss, p, step))
    return errors
