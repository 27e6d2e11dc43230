"""Scorer closures shared by the eval harness and the benchmarks.

Every scorer maps a TokenSet to a similarity in [-1, 1]. The random-frame
baseline derives its per-pair seed from the subject ids so that repeated
evaluations (and evaluations of different scorers on the same pairings) are
deterministic.
"""

import zlib

from periagg import aggregator


def _pair_seed(seed, ts):
    key = f"{seed}:{ts.subject_id_video}:{ts.subject_id_still}"
    return zlib.crc32(key.encode("utf-8"))


def transformer_scorer(params, cfg, reverse_frames=False):
    def scorer(ts):
        if reverse_frames:
            ts = aggregator.TokenSet(
                still=ts.still,
                frames=ts.frames[::-1],
                subject_id_still=ts.subject_id_still,
                subject_id_video=ts.subject_id_video,
            )
        return aggregator.score_v2s(params, cfg, ts)

    return scorer


def baseline_scorers(seed=0):
    return {
        "avg-pool": aggregator.baseline_average_pool,
        "max-pool": aggregator.baseline_max_pool,
        "pairwise": aggregator.baseline_pairwise,
        "random": lambda ts: aggregator.baseline_random(ts, _pair_seed(seed, ts)),
    }
