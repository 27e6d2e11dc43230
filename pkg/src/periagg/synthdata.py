"""Synthetic embedding generator.

Stands in for a CNN feature extractor: each subject gets a unit identity
direction on the sphere, the still and frames are noisy copies of it, and a
seeded fraction of frames per video is corrupted to emulate low-quality
surveillance frames (pure noise, near-zero, or a wrong identity direction).
"""

from dataclasses import dataclass, field

import numpy as np

_CORRUPT_MODES = ("gaussian-blast", "zero-out", "off-identity")


@dataclass
class GenConfig:
    num_subjects: int = 120
    frames_per_video: int = 8
    dim: int = 32
    still_noise_sigma: float = 0.1
    frame_noise_sigma: float = 0.3
    corrupt_fraction: float = 0.0
    corrupt_mode: str = "off-identity"
    seed: int = 0

    def __post_init__(self):
        if self.num_subjects < 1 or self.frames_per_video < 1 or self.dim < 1:
            raise ValueError("num_subjects, frames_per_video and dim must be >= 1")
        if self.still_noise_sigma < 0 or self.frame_noise_sigma < 0:
            raise ValueError("noise sigmas must be >= 0")
        if not 0.0 <= self.corrupt_fraction <= 1.0:
            raise ValueError("corrupt_fraction must lie in [0, 1]")
        if self.corrupt_mode not in _CORRUPT_MODES:
            raise ValueError(
                f"corrupt_mode must be one of {_CORRUPT_MODES}, got {self.corrupt_mode!r}"
            )


@dataclass
class SubjectRecord:
    subject_id: str
    still: np.ndarray  # (D,)
    frames: np.ndarray  # (K, D)
    corrupted: list = field(default_factory=list)  # frame indices


def _unit_direction(rng, dim):
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def generate(cfg: GenConfig):
    """Deterministic dataset of num_subjects records."""
    rng = np.random.default_rng(cfg.seed)
    k = cfg.frames_per_video
    num_corrupt = int(np.floor(cfg.corrupt_fraction * k))
    subjects = []
    for i in range(cfg.num_subjects):
        direction = _unit_direction(rng, cfg.dim)
        still = direction + cfg.still_noise_sigma * rng.standard_normal(cfg.dim)
        frames = direction + cfg.frame_noise_sigma * rng.standard_normal((k, cfg.dim))
        corrupted = sorted(
            int(j) for j in rng.choice(k, size=num_corrupt, replace=False)
        )
        for j in corrupted:
            if cfg.corrupt_mode == "gaussian-blast":
                noise = rng.standard_normal(cfg.dim)
                frames[j] = noise * (np.linalg.norm(frames[j]) / np.linalg.norm(noise))
            elif cfg.corrupt_mode == "zero-out":
                frames[j] = 1e-8 * rng.standard_normal(cfg.dim)
            else:  # off-identity
                frames[j] = _unit_direction(rng, cfg.dim) + (
                    cfg.frame_noise_sigma * rng.standard_normal(cfg.dim)
                )
        subjects.append(
            SubjectRecord(
                subject_id=f"s{i:04d}",
                still=still,
                frames=frames,
                corrupted=corrupted,
            )
        )
    return subjects


def split(subjects, train_fraction, seed):
    """Subject-disjoint train/test split, deterministic per seed."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    n = len(subjects)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_train = int(round(train_fraction * n))
    train_idx = sorted(order[:n_train])
    test_idx = sorted(order[n_train:])
    return [subjects[i] for i in train_idx], [subjects[i] for i in test_idx]
