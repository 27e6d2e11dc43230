"""Encoder-only transformer over a (K+1) x D token matrix.

Pre-norm layers: each applies multi-head self-attention and an MLP, both
behind residual connections. No positional encoding is added anywhere, which
is what makes the frame tokens order-equivariant. Forward can record a cache
so that `backward` can return exact gradients for every parameter and for
the input.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from periagg import kernels
from periagg.errors import NumericError, ShapeError

_GELU_C = math.sqrt(2.0 / math.pi)


@dataclass
class EncoderConfig:
    dim: int
    heads: int
    layers: int
    mlp_hidden: int = 0  # 0 means the 4*dim default
    ln_eps: float = 1e-5

    def __post_init__(self):
        if self.heads < 1 or self.layers < 1 or self.dim < 1:
            raise ValueError("dim, heads and layers must all be >= 1")
        if self.dim % self.heads != 0:
            raise ValueError(
                f"dim {self.dim} is not divisible by heads {self.heads}"
            )
        if self.mlp_hidden == 0:
            self.mlp_hidden = 4 * self.dim
        if self.mlp_hidden < 1:
            raise ValueError("mlp_hidden must be >= 1")
        if self.ln_eps <= 0:
            raise ValueError("ln_eps must be positive")

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads


@dataclass
class LayerParams:
    wq: np.ndarray  # (H, D, Dk)
    wk: np.ndarray  # (H, D, Dk)
    wv: np.ndarray  # (H, D, Dk)
    wo: np.ndarray  # (H*Dk, D)
    ln_attn_gain: np.ndarray  # (D,)
    ln_attn_bias: np.ndarray  # (D,)
    ln_mlp_gain: np.ndarray  # (D,)
    ln_mlp_bias: np.ndarray  # (D,)
    w1: np.ndarray  # (D, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, D)
    b2: np.ndarray  # (D,)


@dataclass
class EncoderParams:
    config: EncoderConfig
    layers: list = field(default_factory=list)


def iter_arrays(params: EncoderParams):
    """Yield (name, array) in the canonical checkpoint order.

    Layer-major; within a layer: per head wq, wk, wv; then wo; the two
    LayerNorms (attention one first, gain then bias); then MLP w1, b1, w2, b2.
    """
    for li, lp in enumerate(params.layers):
        for h in range(lp.wq.shape[0]):
            yield f"layer{li}.head{h}.wq", lp.wq[h]
            yield f"layer{li}.head{h}.wk", lp.wk[h]
            yield f"layer{li}.head{h}.wv", lp.wv[h]
        yield f"layer{li}.wo", lp.wo
        yield f"layer{li}.ln_attn_gain", lp.ln_attn_gain
        yield f"layer{li}.ln_attn_bias", lp.ln_attn_bias
        yield f"layer{li}.ln_mlp_gain", lp.ln_mlp_gain
        yield f"layer{li}.ln_mlp_bias", lp.ln_mlp_bias
        yield f"layer{li}.w1", lp.w1
        yield f"layer{li}.b1", lp.b1
        yield f"layer{li}.w2", lp.w2
        yield f"layer{li}.b2", lp.b2


def zeros_like_params(params: EncoderParams) -> EncoderParams:
    out = EncoderParams(config=params.config)
    for lp in params.layers:
        out.layers.append(
            LayerParams(
                wq=np.zeros_like(lp.wq),
                wk=np.zeros_like(lp.wk),
                wv=np.zeros_like(lp.wv),
                wo=np.zeros_like(lp.wo),
                ln_attn_gain=np.zeros_like(lp.ln_attn_gain),
                ln_attn_bias=np.zeros_like(lp.ln_attn_bias),
                ln_mlp_gain=np.zeros_like(lp.ln_mlp_gain),
                ln_mlp_bias=np.zeros_like(lp.ln_mlp_bias),
                w1=np.zeros_like(lp.w1),
                b1=np.zeros_like(lp.b1),
                w2=np.zeros_like(lp.w2),
                b2=np.zeros_like(lp.b2),
            )
        )
    return out


def add_params_(acc: EncoderParams, other: EncoderParams) -> EncoderParams:
    """In-place acc += other over every array."""
    for (_, a), (_, b) in zip(iter_arrays(acc), iter_arrays(other)):
        a += b
    return acc


def _xavier(rng, fan_in, fan_out, shape):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(cfg: EncoderConfig, seed: int) -> EncoderParams:
    """Residual-neutral initialization.

    Query and key projections share one Xavier-uniform draw per head, so the
    attention logits form a positive semi-definite similarity at step zero:
    the still token immediately attends more to frames that resemble it than
    to outliers, instead of mixing tokens at random. Both output projections
    (attention ``wo`` and MLP ``w2``) start at zero, so the untrained encoder
    is an exact identity on its inputs and scoring reduces to plain average
    pooling; training grows the attention/MLP branches as a learned
    correction on top of that baseline rather than having to first undo a
    random mixing of the tokens. Biases are zero and LayerNorm gains one.
    """
    rng = np.random.default_rng(seed)
    d, h, dk, hidden = cfg.dim, cfg.heads, cfg.head_dim, cfg.mlp_hidden
    params = EncoderParams(config=cfg)
    for _ in range(cfg.layers):
        wq = _xavier(rng, d, dk, (h, d, dk))
        params.layers.append(
            LayerParams(
                wq=wq,
                wk=wq.copy(),
                wv=_xavier(rng, d, dk, (h, d, dk)),
                wo=np.zeros((h * dk, d)),
                ln_attn_gain=np.ones(d),
                ln_attn_bias=np.zeros(d),
                ln_mlp_gain=np.ones(d),
                ln_mlp_bias=np.zeros(d),
                w1=_xavier(rng, d, hidden, (d, hidden)),
                b1=np.zeros(hidden),
                w2=np.zeros((hidden, d)),
                b2=np.zeros(d),
            )
        )
    return params


def empty_params(cfg: EncoderConfig) -> EncoderParams:
    """All-zero parameter container with the shapes cfg implies."""
    d, h, dk, hidden = cfg.dim, cfg.heads, cfg.head_dim, cfg.mlp_hidden
    params = EncoderParams(config=cfg)
    for _ in range(cfg.layers):
        params.layers.append(
            LayerParams(
                wq=np.zeros((h, d, dk)),
                wk=np.zeros((h, d, dk)),
                wv=np.zeros((h, d, dk)),
                wo=np.zeros((h * dk, d)),
                ln_attn_gain=np.zeros(d),
                ln_attn_bias=np.zeros(d),
                ln_mlp_gain=np.zeros(d),
                ln_mlp_bias=np.zeros(d),
                w1=np.zeros((d, hidden)),
                b1=np.zeros(hidden),
                w2=np.zeros((hidden, d)),
                b2=np.zeros(d),
            )
        )
    return params


def _gelu(u):
    t = np.tanh(_GELU_C * (u + 0.044715 * u**3))
    return 0.5 * u * (1.0 + t)


def _gelu_grad(u):
    inner = _GELU_C * (u + 0.044715 * u**3)
    t = np.tanh(inner)
    dinner = _GELU_C * (1.0 + 3 * 0.044715 * u**2)
    return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t**2) * dinner


def attention_single_head_reference(f):
    """Element-wise scalar self-attention, used only as an oracle.

    Row k of the output is sum_m a_km * f_m with a_km the softmax over m of
    the dot products f_k . f_m. Deliberately written with explicit loops.
    """
    f = np.asarray(f, dtype=np.float64)
    n, d = f.shape
    out = np.zeros((n, d))
    for k in range(n):
        logits = []
        for m in range(n):
            s = 0.0
            for j in range(d):
                s += f[k, j] * f[m, j]
            logits.append(s)
        mx = max(logits)
        exps = [math.exp(v - mx) for v in logits]
        z = sum(exps)
        for m in range(n):
            a_km = exps[m] / z
            for j in range(d):
                out[k, j] += a_km * f[m, j]
    return out


@dataclass
class _LayerCache:
    f_in: np.ndarray
    fp: np.ndarray
    xhat1: np.ndarray
    inv1: np.ndarray
    q: list
    k: list
    v: list
    attn: list
    heads_out: np.ndarray  # concatenated (T, H*Dk)
    z: np.ndarray
    zp: np.ndarray
    xhat2: np.ndarray
    inv2: np.ndarray
    u: np.ndarray
    act: np.ndarray


@dataclass
class ForwardCache:
    params: EncoderParams
    layers: list
    shape: tuple


def forward(params: EncoderParams, cfg: EncoderConfig, f, cache_mode=False):
    """Run the encoder.

    Returns (output, cache_or_None, attention) where attention is a list of
    (H, K+1, K+1) row-stochastic arrays, one per layer.
    """
    f = np.ascontiguousarray(np.asarray(f, dtype=np.float64))
    if f.ndim != 2 or f.shape[1] != cfg.dim:
        raise ShapeError(
            f"encoder input must be (tokens, {cfg.dim}), got {f.shape}"
        )
    if f.shape[0] < 1:
        raise ShapeError("encoder needs at least one token")
    scale = 1.0 / math.sqrt(cfg.head_dim)
    attn_all = []
    layer_caches = [] if cache_mode else None
    cur = f
    for li, lp in enumerate(params.layers):
        fp, xhat1, inv1 = kernels.layer_norm_cached(
            cur, lp.ln_attn_gain, lp.ln_attn_bias, cfg.ln_eps
        )
        qs, ks, vs, attns, heads = [], [], [], [], []
        for h in range(cfg.heads):
            q = kernels.matmul(fp, lp.wq[h])
            k = kernels.matmul(fp, lp.wk[h])
            v = kernels.matmul(fp, lp.wv[h])
            logits = kernels.matmul(q, np.ascontiguousarray(k.T)) * scale
            a = kernels.softmax_rows(logits)
            heads.append(kernels.matmul(a, v))
            qs.append(q)
            ks.append(k)
            vs.append(v)
            attns.append(a)
        concat = np.concatenate(heads, axis=1)
        y = kernels.matmul(concat, lp.wo)
        z = y + cur
        zp, xhat2, inv2 = kernels.layer_norm_cached(
            z, lp.ln_mlp_gain, lp.ln_mlp_bias, cfg.ln_eps
        )
        u = kernels.matmul(zp, lp.w1) + lp.b1
        act = _gelu(u)
        out = kernels.matmul(act, lp.w2) + lp.b2 + z
        if not np.isfinite(out).all():
            raise NumericError(f"non-finite values in encoder layer {li}")
        attn_all.append(np.stack(attns))
        if cache_mode:
            layer_caches.append(
                _LayerCache(
                    f_in=cur, fp=fp, xhat1=xhat1, inv1=inv1,
                    q=qs, k=ks, v=vs, attn=attns, heads_out=concat,
                    z=z, zp=zp, xhat2=xhat2, inv2=inv2, u=u, act=act,
                )
            )
        cur = out
    cache = (
        ForwardCache(params=params, layers=layer_caches, shape=f.shape)
        if cache_mode
        else None
    )
    return cur, cache, attn_all


def backward(cache: ForwardCache, upstream):
    """Exact gradients of the cached forward pass.

    Returns (param_grads, input_grad); param_grads mirrors EncoderParams.
    """
    if cache is None or cache.layers is None:
        raise ValueError("backward needs a cache produced by forward(cache_mode=True)")
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != cache.shape:
        raise ShapeError(
            f"upstream shape {g.shape} does not match forward shape {cache.shape}"
        )
    params = cache.params
    cfg = params.config
    scale = 1.0 / math.sqrt(cfg.head_dim)
    dk = cfg.head_dim
    grads = zeros_like_params(params)
    for li in range(len(params.layers) - 1, -1, -1):
        lp = params.layers[li]
        gl = grads.layers[li]
        lc = cache.layers[li]

        # out = act @ w2 + b2 + z
        gl.b2 += g.sum(axis=0)
        d_act, d_w2 = kernels.matmul_grad(lc.act, lp.w2, g)
        gl.w2 += d_w2
        dz = g.copy()

        # act = gelu(u); u = zp @ w1 + b1
        du = d_act * _gelu_grad(lc.u)
        gl.b1 += du.sum(axis=0)
        dzp, d_w1 = kernels.matmul_grad(lc.zp, lp.w1, du)
        gl.w1 += d_w1

        # zp = LN(z)
        dz_ln, dgain2, dbias2 = kernels.layer_norm_grad(
            dzp, lc.xhat2, lc.inv2, lp.ln_mlp_gain
        )
        gl.ln_mlp_gain += dgain2
        gl.ln_mlp_bias += dbias2
        dz += dz_ln

        # z = concat @ wo + f_in
        df = dz.copy()
        dconcat, d_wo = kernels.matmul_grad(lc.heads_out, lp.wo, dz)
        gl.wo += d_wo

        dfp = np.zeros_like(lc.fp)
        for h in range(cfg.heads):
            dh = np.ascontiguousarray(dconcat[:, h * dk:(h + 1) * dk])
            a, q, k, v = lc.attn[h], lc.q[h], lc.k[h], lc.v[h]
            da, dv = kernels.matmul_grad(a, v, dh)
            ds = kernels.softmax_rows_grad(a, da) * scale
            dq = kernels.matmul(ds, k)
            dkh = kernels.matmul(np.ascontiguousarray(ds.T), q)
            dfp_h, d_wq = kernels.matmul_grad(lc.fp, lp.wq[h], dq)
            dfp += dfp_h
            dfp_h, d_wk = kernels.matmul_grad(lc.fp, lp.wk[h], dkh)
            dfp += dfp_h
            dfp_h, d_wv = kernels.matmul_grad(lc.fp, lp.wv[h], dv)
            dfp += dfp_h
            gl.wq[h] += d_wq
            gl.wk[h] += d_wk
            gl.wv[h] += d_wv

        # fp = LN(f_in)
        df_ln, dgain1, dbias1 = kernels.layer_norm_grad(
            dfp, lc.xhat1, lc.inv1, lp.ln_attn_gain
        )
        gl.ln_attn_gain += dgain1
        gl.ln_attn_bias += dbias1
        g = df + df_ln
    return grads, g
