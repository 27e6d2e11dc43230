"""Metric-learning trainer: pair construction, cosine embedding loss, AdamW.

Genuine/impostor pairs are built once per run (seeded), shuffled every epoch
and consumed in mini-batches; each batch takes one AdamW step on the mean
pair loss. Everything is deterministic given the config seed.
"""

from dataclasses import dataclass, field

import numpy as np

from periagg import encoder
from periagg.aggregator import TokenSet, assemble_tokens
from periagg.errors import NumericError, ScoringError

# weight matrices get decoupled decay; LN parameters and biases do not
_DECAY_SUFFIXES = (".wq", ".wk", ".wv", ".wo", ".w1", ".w2")


@dataclass
class TrainConfig:
    margin: float = 0.5
    learning_rate: float = 1e-5
    weight_decay: float = 1e-1
    batch_size: int = 16
    epochs: int = 10
    impostors_per_genuine: int = 15
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.margin <= 1.0:
            raise ValueError("margin must lie in [0, 1]")
        # learning_rate 0 is allowed as a diagnostic no-op
        if self.learning_rate < 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning_rate, batch_size and epochs must be positive")
        if self.impostors_per_genuine < 1:
            raise ValueError("impostors_per_genuine must be >= 1")


@dataclass
class PairSample:
    tokens: TokenSet
    label: int  # +1 genuine, -1 impostor


@dataclass
class OptimizerState:
    m: encoder.EncoderParams
    v: encoder.EncoderParams
    t: int = 0


def cosine_embedding_loss(r, r_s, y, margin):
    """Loss and gradients w.r.t. both vectors.

    y=+1: 1 - cos(r, r_s). y=-1: max(0, cos(r, r_s) - margin), with zero
    gradient at the hinge boundary.
    """
    r = np.asarray(r, dtype=np.float64)
    r_s = np.asarray(r_s, dtype=np.float64)
    n1 = np.linalg.norm(r)
    n2 = np.linalg.norm(r_s)
    if n1 == 0.0 or n2 == 0.0:
        raise ScoringError("cosine embedding loss needs nonzero-norm inputs")
    c = float(np.dot(r, r_s) / (n1 * n2))
    dc_dr = r_s / (n1 * n2) - c * r / (n1 * n1)
    dc_drs = r / (n1 * n2) - c * r_s / (n2 * n2)
    if y == 1:
        return 1.0 - c, -dc_dr, -dc_drs
    if y == -1:
        if c > margin:
            return c - margin, dc_dr, dc_drs
        return 0.0, np.zeros_like(r), np.zeros_like(r_s)
    raise ValueError(f"label must be +1 or -1, got {y}")


def build_pairs(subjects, cfg: TrainConfig, seed: int):
    """One genuine pair per subject plus sampled impostor pairs.

    Impostor pairs keep the subject's own frames but swap in a still from a
    distinct other subject, sampled without replacement.
    """
    n = len(subjects)
    if n < cfg.impostors_per_genuine + 1:
        raise ValueError(
            f"need at least {cfg.impostors_per_genuine + 1} subjects, got {n}"
        )
    rng = np.random.default_rng(seed)
    pairs = []
    for i, subj in enumerate(subjects):
        pairs.append(
            PairSample(
                tokens=TokenSet(
                    still=subj.still,
                    frames=subj.frames,
                    subject_id_still=subj.subject_id,
                    subject_id_video=subj.subject_id,
                ),
                label=1,
            )
        )
        others = np.array([j for j in range(n) if j != i])
        chosen = rng.choice(others, size=cfg.impostors_per_genuine, replace=False)
        for j in chosen:
            other = subjects[int(j)]
            pairs.append(
                PairSample(
                    tokens=TokenSet(
                        still=other.still,
                        frames=subj.frames,
                        subject_id_still=other.subject_id,
                        subject_id_video=subj.subject_id,
                    ),
                    label=-1,
                )
            )
    return pairs


def init_optimizer_state(params: encoder.EncoderParams) -> OptimizerState:
    return OptimizerState(
        m=encoder.zeros_like_params(params),
        v=encoder.zeros_like_params(params),
        t=0,
    )


def adamw_step(params, grads, state: OptimizerState, cfg: TrainConfig):
    """One decoupled-weight-decay Adam update, in place."""
    state.t += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for (name, p), (_, g), (_, m), (_, v) in iter4(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        mhat = m / bc1
        vhat = v / bc2
        step = cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.adam_eps)
        if name.endswith(_DECAY_SUFFIXES):
            step = step + cfg.learning_rate * cfg.weight_decay * p
        p -= step
    return params, state


def iter4(a, b, c, d):
    return zip(
        encoder.iter_arrays(a),
        encoder.iter_arrays(b),
        encoder.iter_arrays(c),
        encoder.iter_arrays(d),
    )


def pair_loss_and_grads(params, cfg, pair: PairSample, margin):
    """Loss of one pair plus parameter gradients through the full pipeline."""
    f = assemble_tokens(pair.tokens)
    out, cache, _ = encoder.forward(params, cfg, f, cache_mode=True)
    k = pair.tokens.num_frames
    r = out[1:].mean(axis=0)
    r_s = out[0]
    loss, grad_r, grad_rs = cosine_embedding_loss(r, r_s, pair.label, margin)
    upstream = np.zeros_like(out)
    upstream[0] = grad_rs
    upstream[1:] = grad_r / k
    grads, _ = encoder.backward(cache, upstream)
    return loss, grads


def train(subjects, enc_cfg: encoder.EncoderConfig, train_cfg: TrainConfig):
    """Full training run; returns (params, per-epoch mean loss trace)."""
    params = encoder.init_params(enc_cfg, train_cfg.seed)
    pairs = build_pairs(subjects, train_cfg, train_cfg.seed)
    state = init_optimizer_state(params)
    shuffle_rng = np.random.default_rng(train_cfg.seed + 1)
    trace = []
    for epoch in range(train_cfg.epochs):
        order = shuffle_rng.permutation(len(pairs))
        batch_losses = []
        for start in range(0, len(pairs), train_cfg.batch_size):
            batch = [pairs[i] for i in order[start:start + train_cfg.batch_size]]
            acc = encoder.zeros_like_params(params)
            total = 0.0
            for pair in batch:
                loss, grads = pair_loss_and_grads(
                    params, enc_cfg, pair, train_cfg.margin
                )
                total += loss
                encoder.add_params_(acc, grads)
            batch_loss = total / len(batch)
            if not np.isfinite(batch_loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {start // train_cfg.batch_size}"
                )
            for _, g in encoder.iter_arrays(acc):
                g /= len(batch)
            adamw_step(params, acc, state, train_cfg)
            batch_losses.append(batch_loss)
        trace.append(float(np.mean(batch_losses)))
    return params, trace
