import numpy as np
import pytest

from sptm.replay import ReplayBuffer, SamplingError, sample_pairs_l, sample_pairs_r


def filled_buffer(n=600, traj_id=0, seed=0, capacity=None):
    rng = np.random.default_rng(seed)
    buf = ReplayBuffer(capacity=capacity or n)
    frames = rng.integers(0, 256, size=(n + 1, 3, 4, 3), dtype=np.uint8)
    actions = rng.integers(0, 7, size=n)
    buf.add_trajectory(frames, actions, traj_id=traj_id)
    return buf


def test_capacity_never_exceeded():
    buf = filled_buffer(n=50, capacity=30)
    assert len(buf) == 30


def test_time_indices_strictly_increasing():
    buf = ReplayBuffer(capacity=10)
    obs = np.zeros(8, dtype=np.uint8)
    buf.add(obs, 0, traj_id=1, time_index=5)
    with pytest.raises(ValueError, match="increasing"):
        buf.add(obs, 0, traj_id=1, time_index=5)


def test_positive_pairs_within_close_range():
    buf = filled_buffer()
    rng = np.random.default_rng(1)
    batch = sample_pairs_r(buf, 64, rng)
    pos = batch.labels == 1
    neg = ~pos
    assert pos.sum() == 32 and neg.sum() == 32
    assert (np.abs(batch.t1[pos] - batch.t2[pos]) <= 20).all()
    assert (np.abs(batch.t1[neg] - batch.t2[neg]) >= 100).all()


def test_pairs_never_cross_trajectories():
    buf = ReplayBuffer(capacity=1200)
    rng = np.random.default_rng(2)
    for tid in range(2):
        frames = rng.integers(0, 256, size=(601, 3, 4, 3), dtype=np.uint8)
        buf.add_trajectory(frames, rng.integers(0, 7, size=600), traj_id=tid)
    for _ in range(50):
        b = sample_pairs_r(buf, 64, rng)
        # both ends of each pair carry the anchor's trajectory; verify against
        # the buffer's own records
        for o1, o2, tr, ta, tb in zip(b.obs1, b.obs2, b.traj, b.t1, b.t2):
            slots_a = np.where((buf.traj == tr) & (buf.tidx == ta))[0]
            slots_b = np.where((buf.traj == tr) & (buf.tidx == tb))[0]
            assert len(slots_a) == 1 and len(slots_b) == 1
            assert (buf._obs[slots_a[0]] == o1).all()
            assert (buf._obs[slots_b[0]] == o2).all()


def test_label_balance_statistics():
    buf = filled_buffer(n=10_000)
    rng = np.random.default_rng(3)
    total_pos = 0
    draws = 0
    for _ in range(157):  # ~10k samples
        b = sample_pairs_r(buf, 64, rng)
        total_pos += int((b.labels == 1).sum())
        draws += len(b.labels)
    frac = total_pos / draws
    assert abs(frac - 0.5) <= 0.02


def test_negative_needs_long_span():
    buf = filled_buffer(n=80)  # span < 100
    with pytest.raises(SamplingError, match="negatives"):
        sample_pairs_r(buf, 8, np.random.default_rng(0))


def test_locomotion_gap_uniform_and_action_matches():
    buf = filled_buffer(n=10_000, seed=5)
    rng = np.random.default_rng(4)
    gaps = []
    for _ in range(80):
        b = sample_pairs_l(buf, 64, rng)
        gaps.extend((b.t2 - b.t1).tolist())
        for a, tr, t in zip(b.actions, b.traj, b.t1):
            slot = np.where((buf.traj == tr) & (buf.tidx == t))[0][0]
            assert buf.actions[slot] == a
    gaps = np.array(gaps)
    assert gaps.min() >= 1 and gaps.max() <= 20
    freq = np.bincount(gaps, minlength=21)[1:] / len(gaps)
    assert (np.abs(freq - 1 / 20) < 0.01).all()


def test_locomotion_rejects_tiny_buffer():
    buf = filled_buffer(n=15)
    with pytest.raises(SamplingError, match="21"):
        sample_pairs_l(buf, 8, np.random.default_rng(0))


def test_ring_overwrite_keeps_newest():
    rng = np.random.default_rng(6)
    buf = ReplayBuffer(capacity=100)
    frames = rng.integers(0, 256, size=(151, 2, 2, 3), dtype=np.uint8)
    buf.add_trajectory(frames, rng.integers(0, 7, size=150), traj_id=9)
    assert len(buf) == 100
    # oldest 50 records were overwritten
    assert buf.tidx[buf.traj == 9].min() >= 0
    remaining = sorted(buf.tidx[np.where(buf.traj == 9)])
    assert remaining == list(range(50, 150))
