"""Token assembly, encoder-based aggregation and the naive baselines.

A TokenSet pairs one still embedding with the K frame embeddings of one
video. The transformer path stacks them (still first), runs the encoder and
reads out the video-level representation (mean of the frame output tokens)
and the refined still representation (the still output token). The naive
baselines score the raw embeddings directly.
"""

from dataclasses import dataclass, field

import numpy as np

from periagg import encoder
from periagg.errors import ScoringError, ShapeError


@dataclass
class TokenSet:
    still: np.ndarray  # (D,)
    frames: np.ndarray  # (K, D)
    subject_id_still: str
    subject_id_video: str

    def __post_init__(self):
        self.still = np.asarray(self.still, dtype=np.float64)
        self.frames = np.atleast_2d(np.asarray(self.frames, dtype=np.float64))
        if self.still.ndim != 1:
            raise ShapeError(f"still must be 1-D, got shape {self.still.shape}")
        if self.frames.shape[0] < 1:
            raise ShapeError("need at least one frame")
        if self.frames.shape[1] != self.still.shape[0]:
            raise ShapeError(
                f"frame dim {self.frames.shape[1]} != still dim {self.still.shape[0]}"
            )
        if not (np.isfinite(self.still).all() and np.isfinite(self.frames).all()):
            raise ValueError("token set contains non-finite values")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.still.shape[0]


@dataclass
class AggregateOutput:
    video_rep: np.ndarray  # (D,)
    still_rep: np.ndarray  # (D,)
    attention_weights: list = field(default_factory=list)  # per layer (H, T, T)


def assemble_tokens(ts: TokenSet) -> np.ndarray:
    """(K+1) x D matrix: row 0 the still, rows 1..K the frames in order."""
    return np.vstack([ts.still[None, :], ts.frames])


def cosine_similarity(a, b) -> float:
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ScoringError("cannot score a zero-norm representation")
    return float(np.dot(a, b) / (na * nb))


def aggregate(params, cfg, ts: TokenSet) -> AggregateOutput:
    if cfg.dim != ts.dim:
        raise ShapeError(f"encoder dim {cfg.dim} != embedding dim {ts.dim}")
    out, _, attn = encoder.forward(params, cfg, assemble_tokens(ts))
    return AggregateOutput(
        video_rep=out[1:].mean(axis=0),
        still_rep=out[0],
        attention_weights=attn,
    )


def score_v2s(params, cfg, ts: TokenSet) -> float:
    """Cosine similarity between the aggregated video and refined still."""
    out = aggregate(params, cfg, ts)
    return cosine_similarity(out.video_rep, out.still_rep)


def baseline_average_pool(ts: TokenSet) -> float:
    return cosine_similarity(ts.frames.mean(axis=0), ts.still)


def baseline_max_pool(ts: TokenSet) -> float:
    return cosine_similarity(ts.frames.max(axis=0), ts.still)


def baseline_random(ts: TokenSet, seed: int) -> float:
    rng = np.random.default_rng(seed)
    idx = int(rng.integers(ts.num_frames))
    return cosine_similarity(ts.frames[idx], ts.still)


def baseline_pairwise(ts: TokenSet) -> float:
    scores = [cosine_similarity(f, ts.still) for f in ts.frames]
    return float(np.mean(scores))


def export_attention_weights(out: AggregateOutput):
    """Frame importance as seen by the still token.

    Takes the last layer's attention, averages heads, reads the still-query
    row restricted to the frame columns and sorts descending (stable, so
    equal weights keep frame order). Returns a list of (frame_index, weight).
    """
    if not out.attention_weights:
        raise ValueError("aggregate output carries no attention weights")
    last = out.attention_weights[-1]  # (H, T, T)
    weights = last.mean(axis=0)[0, 1:]
    order = np.argsort(-weights, kind="stable")
    return [(int(i), float(weights[i])) for i in order]
