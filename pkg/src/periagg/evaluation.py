"""Verification and identification protocols over similarity scores.

Threshold semantics, pinned once and checked against brute-force oracles in
the tests: a comparison is accepted when score >= threshold; the operating
threshold for a FAR target is the smallest observed impostor score (or +inf)
whose empirical FAR does not exceed the target.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from periagg.aggregator import TokenSet
from periagg.errors import ScoringError


@dataclass
class ScoreSet:
    genuine_scores: list
    impostor_scores: list


@dataclass
class EvalReport:
    label: str
    tar_at_far: dict = field(default_factory=dict)  # far -> (tar, threshold)
    det_points: list = field(default_factory=list)  # (far, frr)
    rank_accuracies: dict = field(default_factory=dict)  # n -> accuracy
    cmc_points: list = field(default_factory=list)  # (rank, cumulative acc)
    num_genuine: int = 0
    num_impostor: int = 0
    scoring_errors: int = 0


def tar_at_far(scores: ScoreSet, far_target: float):
    """(TAR, threshold) at the given FAR operating point."""
    if not scores.genuine_scores or not scores.impostor_scores:
        raise ValueError("tar_at_far needs non-empty genuine and impostor scores")
    if not 0.0 < far_target < 1.0:
        raise ValueError(f"far_target must lie in (0, 1), got {far_target}")
    gen = np.asarray(scores.genuine_scores, dtype=np.float64)
    imp = np.sort(np.asarray(scores.impostor_scores, dtype=np.float64))
    n = imp.size
    threshold = math.inf
    # ascending sweep: the fraction of impostors >= imp[i] is (n - i) / n
    for i in range(n):
        if i > 0 and imp[i] == imp[i - 1]:
            continue
        if (n - i) / n <= far_target:
            threshold = float(imp[i])
            break
    tar = float(np.mean(gen >= threshold))
    return tar, threshold


def det_curve(scores: ScoreSet):
    """(FAR, FRR) points swept over all observed scores, FAR ascending."""
    if not scores.genuine_scores or not scores.impostor_scores:
        raise ValueError("det_curve needs non-empty genuine and impostor scores")
    gen = np.asarray(scores.genuine_scores, dtype=np.float64)
    imp = np.asarray(scores.impostor_scores, dtype=np.float64)
    thresholds = np.unique(np.concatenate([gen, imp]))[::-1]
    points = [(0.0, 1.0)]  # threshold above every score
    for t in thresholds:
        far = float(np.mean(imp >= t))
        frr = float(np.mean(gen < t))
        if (far, frr) != points[-1]:
            points.append((far, frr))
    if points[-1] != (1.0, 0.0):
        points.append((1.0, 0.0))
    return points


def identify(query_frames, query_video_id, gallery, scorer):
    """Rank gallery identities for one query video.

    ``gallery`` is a list of (subject_id, still_embedding); ``scorer`` maps a
    TokenSet to a similarity. Each gallery still is paired with the query's
    frames in a fresh TokenSet. Entries whose scorer raises ScoringError rank
    last; ties break by gallery insertion order.
    """
    if not gallery:
        raise ValueError("gallery must be non-empty")
    entries = []
    for idx, (subject_id, still) in enumerate(gallery):
        ts = TokenSet(
            still=still,
            frames=query_frames,
            subject_id_still=subject_id,
            subject_id_video=query_video_id,
        )
        try:
            score = scorer(ts)
            failed = 0
        except ScoringError:
            score = -math.inf
            failed = 1
        entries.append((failed, -score, idx, subject_id))
    entries.sort(key=lambda e: (e[0], e[1], e[2]))
    return [subject_id for _, _, _, subject_id in entries]


def cmc(correct_ranks, max_rank):
    """CMC points and Rank-N accuracies from 1-based correct-match ranks."""
    if not correct_ranks:
        raise ValueError("cmc needs at least one query")
    ranks = np.asarray(correct_ranks)
    points = []
    accs = {}
    for n in range(1, max_rank + 1):
        acc = float(np.mean(ranks <= n))
        points.append((n, acc))
        accs[n] = acc
    return points, accs


def collect_scores(subjects, scorer, pairings):
    """Score the given (video_subject, still_subject) index pairings.

    Returns (ScoreSet, error_count); pairs that fail to score are skipped and
    counted.
    """
    genuine, impostor, errors = [], [], 0
    for vi, si in pairings:
        video = subjects[vi]
        still_subj = subjects[si]
        ts = TokenSet(
            still=still_subj.still,
            frames=video.frames,
            subject_id_still=still_subj.subject_id,
            subject_id_video=video.subject_id,
        )
        try:
            score = scorer(ts)
        except ScoringError:
            errors += 1
            continue
        (genuine if vi == si else impostor).append(score)
    return ScoreSet(genuine_scores=genuine, impostor_scores=impostor), errors


def verification_pairings(num_subjects, max_impostors=None, seed=0):
    """Shared pairing list: all genuine pairs plus (optionally capped) impostors."""
    pairs = [(i, i) for i in range(num_subjects)]
    impostors = [
        (i, j)
        for i in range(num_subjects)
        for j in range(num_subjects)
        if i != j
    ]
    if max_impostors is not None and len(impostors) > max_impostors:
        rng = np.random.default_rng(seed)
        keep = rng.choice(len(impostors), size=max_impostors, replace=False)
        impostors = [impostors[int(k)] for k in sorted(keep)]
    return pairs + impostors


def evaluate_v2s(
    subjects,
    scorers,
    fars=(1e-3, 1e-2, 1e-1),
    max_rank=5,
    max_impostors=None,
    seed=0,
):
    """Run verification and identification for every scorer.

    ``scorers`` is {label: callable(TokenSet) -> score}. All scorers see the
    byte-identical pairing list and the full still gallery. Returns
    {label: EvalReport}.
    """
    if not subjects:
        raise ValueError("evaluate_v2s needs a non-empty subject list")
    pairings = verification_pairings(len(subjects), max_impostors, seed)
    gallery = [(s.subject_id, s.still) for s in subjects]
    reports = {}
    for label, scorer in scorers.items():
        score_set, errors = collect_scores(subjects, scorer, pairings)
        report = EvalReport(
            label=label,
            num_genuine=len(score_set.genuine_scores),
            num_impostor=len(score_set.impostor_scores),
            scoring_errors=errors,
        )
        for far in fars:
            report.tar_at_far[far] = tar_at_far(score_set, far)
        report.det_points = det_curve(score_set)
        correct_ranks = []
        for subj in subjects:
            ranking = identify(subj.frames, subj.subject_id, gallery, scorer)
            correct_ranks.append(ranking.index(subj.subject_id) + 1)
        report.cmc_points, report.rank_accuracies = cmc(correct_ranks, max_rank)
        reports[label] = report
    return reports
