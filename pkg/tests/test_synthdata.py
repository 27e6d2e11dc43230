"""Unit tests for the synthetic embedding generator and the subject split."""

import numpy as np
import pytest

from periagg import synthdata


def test_gen_config_validation():
    with pytest.raises(ValueError):
        synthdata.GenConfig(num_subjects=0)
    with pytest.raises(ValueError):
        synthdata.GenConfig(still_noise_sigma=-0.1)
    with pytest.raises(ValueError):
        synthdata.GenConfig(corrupt_fraction=1.5)
    with pytest.raises(ValueError):
        synthdata.GenConfig(corrupt_mode="nonsense")


def test_generate_shapes_and_ids():
    cfg = synthdata.GenConfig(num_subjects=5, frames_per_video=3, dim=16, seed=0)
    subjects = synthdata.generate(cfg)
    assert [s.subject_id for s in subjects] == [f"s{i:04d}" for i in range(5)]
    for s in subjects:
        assert s.still.shape == (16,)
        assert s.frames.shape == (3, 16)
        assert s.corrupted == []


def test_generate_deterministic_per_seed():
    cfg = synthdata.GenConfig(num_subjects=6, seed=9)
    a = synthdata.generate(cfg)
    b = synthdata.generate(cfg)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.still, y.still)
        np.testing.assert_array_equal(x.frames, y.frames)
        assert x.corrupted == y.corrupted
    c = synthdata.generate(synthdata.GenConfig(num_subjects=6, seed=10))
    assert not np.array_equal(a[0].still, c[0].still)


def test_zero_noise_collapses_to_identity_direction():
    cfg = synthdata.GenConfig(
        num_subjects=3,
        frames_per_video=4,
        dim=8,
        still_noise_sigma=0.0,
        frame_noise_sigma=0.0,
        seed=1,
    )
    for s in synthdata.generate(cfg):
        np.testing.assert_allclose(np.linalg.norm(s.still), 1.0, atol=1e-12)
        for f in s.frames:
            np.testing.assert_array_equal(f, s.still)


def test_corruption_count_is_floor_of_fraction():
    for frac, expected in [(0.0, 0), (0.49, 3), (0.5, 4), (0.99, 7), (1.0, 8)]:
        cfg = synthdata.GenConfig(
            num_subjects=4, frames_per_video=8, corrupt_fraction=frac, seed=2
        )
        for s in synthdata.generate(cfg):
            assert len(s.corrupted) == expected
            assert s.corrupted == sorted(set(s.corrupted))


def test_corrupt_modes_behave_distinctly():
    base = dict(
        num_subjects=40, frames_per_video=6, dim=32, still_noise_sigma=0.0,
        frame_noise_sigma=0.05, corrupt_fraction=0.5, seed=3,
    )
    zero = synthdata.generate(
        synthdata.GenConfig(corrupt_mode="zero-out", **base)
    )
    for s in zero:
        for j in s.corrupted:
            assert np.linalg.norm(s.frames[j]) < 1e-6
    blast = synthdata.generate(
        synthdata.GenConfig(corrupt_mode="gaussian-blast", **base)
    )
    off = synthdata.generate(
        synthdata.GenConfig(corrupt_mode="off-identity", **base)
    )
    for batch in (blast, off):
        sims = []
        for s in batch:
            direction = s.still  # still_noise_sigma 0: still == identity direction
            for j in s.corrupted:
                f = s.frames[j]
                sims.append(f @ direction / np.linalg.norm(f))
        # corrupted frames carry no identity signal on average
        assert abs(np.mean(sims)) < 0.1
    for s in blast:  # matched-norm noise keeps the frame scale
        clean = [j for j in range(6) if j not in s.corrupted]
        norms_clean = np.linalg.norm(s.frames[clean], axis=1).mean()
        norms_corr = np.linalg.norm(s.frames[s.corrupted], axis=1).mean()
        assert norms_corr == pytest.approx(norms_clean, rel=0.2)


def test_full_off_identity_corruption_decorrelates_every_frame():
    cfg = synthdata.GenConfig(
        num_subjects=60, frames_per_video=4, dim=32, still_noise_sigma=0.0,
        frame_noise_sigma=0.0, corrupt_fraction=1.0, corrupt_mode="off-identity",
        seed=4,
    )
    sims = []
    for s in synthdata.generate(cfg):
        for f in s.frames:
            sims.append(f @ s.still / np.linalg.norm(f))
    assert abs(np.mean(sims)) < 0.05  # chance level


def test_same_subject_frames_more_similar_than_cross_subject():
    cfg = synthdata.GenConfig(
        num_subjects=100, frames_per_video=4, dim=32,
        still_noise_sigma=0.05, frame_noise_sigma=0.1, seed=5,
    )
    subjects = synthdata.generate(cfg)

    def cos(a, b):
        return a @ b / (np.linalg.norm(a) * np.linalg.norm(b))

    within = [cos(s.frames[0], s.frames[1]) for s in subjects]
    across = [
        cos(subjects[i].frames[0], subjects[i + 1].frames[0])
        for i in range(len(subjects) - 1)
    ]
    assert np.mean(within) > np.mean(across) + 0.5


def test_split_is_disjoint_partition_and_deterministic():
    subjects = synthdata.generate(synthdata.GenConfig(num_subjects=20, seed=6))
    train, test = synthdata.split(subjects, 0.7, seed=0)
    assert len(train) == 14 and len(test) == 6
    train_ids = {s.subject_id for s in train}
    test_ids = {s.subject_id for s in test}
    assert train_ids.isdisjoint(test_ids)
    assert train_ids | test_ids == {s.subject_id for s in subjects}
    again = synthdata.split(subjects, 0.7, seed=0)
    assert [s.subject_id for s in again[0]] == [s.subject_id for s in train]
    other = synthdata.split(subjects, 0.7, seed=1)
    assert [s.subject_id for s in other[0]] != [s.subject_id for s in train]
    with pytest.raises(ValueError):
        synthdata.split(subjects, 0.0, seed=0)
    with pytest.raises(ValueError):
        synthdata.split(subjects, 1.0, seed=0)
