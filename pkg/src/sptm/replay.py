"""Ring replay buffer over (observation, action, trajectory, time) records,
and the pair samplers that turn it into training batches.

Similarity pairs: positives are at most `l` steps apart, negatives at least
`margin * l`, always within one trajectory, labels drawn 50/50. Locomotion
samples pair an observation with one 1..l steps ahead and the action taken
at the first of the two.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


class SamplingError(ValueError):
    """Buffer cannot produce a requested batch (too small / no valid pairs)."""


@dataclass
class PairBatchR:
    """Similarity training batch plus provenance for invariant checks."""

    obs1: np.ndarray    # uint8 [B, obs_bytes]
    obs2: np.ndarray
    labels: np.ndarray  # int64 [B], 1 = temporally close
    traj: np.ndarray
    t1: np.ndarray
    t2: np.ndarray


@dataclass
class PairBatchL:
    obs: np.ndarray
    goal_obs: np.ndarray
    actions: np.ndarray  # int64 [B]
    traj: np.ndarray
    t1: np.ndarray
    t2: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring of (observation, action, trajectory-id, time-index).

    Observations are stored as raw uint8 bytes (stacked frame pairs); samplers
    return uint8 slices, converted to float only at batch assembly. Oldest
    records are overwritten first.
    """

    def __init__(self, capacity: int = 10_000, obs_bytes: int | None = None):
        self.capacity = capacity
        self.obs_bytes = obs_bytes
        self._obs: np.ndarray | None = None
        self.actions = np.zeros(capacity, dtype=np.int8)
        self.traj = np.full(capacity, -1, dtype=np.int64)
        self.tidx = np.zeros(capacity, dtype=np.int64)
        self.size = 0
        self.ptr = 0
        self._slots_by_traj: dict[int, deque[int]] = {}

    def __len__(self) -> int:
        return self.size

    def _ensure_storage(self, obs_bytes: int) -> None:
        if self._obs is None:
            self.obs_bytes = obs_bytes
            self._obs = np.zeros((self.capacity, obs_bytes), dtype=np.uint8)
        elif obs_bytes != self.obs_bytes:
            raise ValueError(f"observation size {obs_bytes} != buffer size {self.obs_bytes}")

    def add(self, obs_flat: np.ndarray, action: int, traj_id: int, time_index: int) -> None:
        obs_flat = np.ascontiguousarray(obs_flat, dtype=np.uint8).reshape(-1)
        self._ensure_storage(obs_flat.size)
        slot = self.ptr
        old_traj = self.traj[slot]
        if self.size == self.capacity and old_traj >= 0:
            q = self._slots_by_traj.get(int(old_traj))
            if q:
                q.popleft()
                if not q:
                    del self._slots_by_traj[int(old_traj)]
        dq = self._slots_by_traj.setdefault(traj_id, deque())
        if dq:
            last_t = self.tidx[dq[-1]]
            if time_index <= last_t:
                raise ValueError(f"time index {time_index} not increasing within trajectory {traj_id}")
        dq.append(slot)
        self._obs[slot] = obs_flat
        self.actions[slot] = action
        self.traj[slot] = traj_id
        self.tidx[slot] = time_index
        self.ptr = (self.ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def add_trajectory(self, frames: np.ndarray, actions: np.ndarray, traj_id: int) -> None:
        """Record a rollout: frames [T+1,H,W,3] uint8, actions [T].

        Record t holds the observation (frame[t-1], frame[t]) — duplicated at
        t=0 — and the action taken after it; the final frame closes the last
        observation but has no action, so it contributes no record.
        """
        frames = np.asarray(frames, dtype=np.uint8)
        n = len(actions)
        if len(frames) != n + 1:
            raise ValueError("need exactly one more frame than actions")
        prev = np.concatenate([frames[:1], frames[: n - 1]]) if n > 1 else frames[:1]
        obs = np.stack([prev, frames[:n]], axis=1).reshape(n, -1)
        for t in range(n):
            self.add(obs[t], int(actions[t]), traj_id, t)

    def _traj_arrays(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per trajectory: (slots in time order, their time indices)."""
        out = []
        for dq in self._slots_by_traj.values():
            slots = np.fromiter(dq, dtype=np.int64)
            out.append((slots, self.tidx[slots]))
        return out


def sample_pairs_r(buffer: ReplayBuffer, batch: int = 64, rng: np.random.Generator | None = None,
                   l: int = 20, margin: int = 5) -> PairBatchR:
    """Half temporally-close positives (gap <= l), half distant negatives
    (gap >= margin*l), never crossing trajectory boundaries."""
    rng = rng or np.random.default_rng()
    trajs = buffer._traj_arrays()
    min_neg = margin * l
    neg_ok = [(s, t) for s, t in trajs if t[-1] - t[0] >= min_neg]
    if not neg_ok:
        raise SamplingError(f"no trajectory spans {min_neg} steps; cannot draw negatives")
    pos_ok = [(s, t) for s, t in trajs if len(s) >= 2]
    if not pos_ok:
        raise SamplingError("no trajectory with at least 2 records")

    n_pos = batch // 2
    n_neg = batch - n_pos
    idx_a = np.empty(batch, dtype=np.int64)
    idx_b = np.empty(batch, dtype=np.int64)
    labels = np.empty(batch, dtype=np.int64)

    for k in range(n_pos):
        slots, times = pos_ok[int(rng.integers(len(pos_ok)))]
        n = len(slots)
        for _ in range(1000):
            a = int(rng.integers(n))
            g = int(rng.integers(0, l + 1))
            b = a + g if rng.random() < 0.5 else a - g
            if 0 <= b < n and abs(int(times[b]) - int(times[a])) <= l:
                break
        else:
            raise SamplingError("could not draw a positive pair")
        idx_a[k], idx_b[k], labels[k] = slots[a], slots[b], 1

    for k in range(n_pos, batch):
        slots, times = neg_ok[int(rng.integers(len(neg_ok)))]
        n = len(slots)
        for _ in range(1000):
            a = int(rng.integers(n))
            ta = int(times[a])
            lo = int(np.searchsorted(times, ta - min_neg, side="right"))   # count below
            hi = int(np.searchsorted(times, ta + min_neg, side="left"))
            n_valid = lo + (n - hi)
            if n_valid == 0:
                continue
            u = int(rng.integers(n_valid))
            b = u if u < lo else hi + (u - lo)
            if rng.random() < 0.5:
                a, b = b, a
            break
        else:
            raise SamplingError("could not draw a negative pair")
        idx_a[k], idx_b[k], labels[k] = slots[a], slots[b], 0

    return PairBatchR(
        obs1=buffer._obs[idx_a],
        obs2=buffer._obs[idx_b],
        labels=labels,
        traj=buffer.traj[idx_a],
        t1=buffer.tidx[idx_a],
        t2=buffer.tidx[idx_b],
    )


def sample_pairs_l(buffer: ReplayBuffer, batch: int = 64, rng: np.random.Generator | None = None,
                   l: int = 20) -> PairBatchL:
    """Pairs (o_i, o_j) with j - i uniform on [1, l], target = action at i."""
    rng = rng or np.random.default_rng()
    if len(buffer) < l + 1:
        raise SamplingError(f"buffer has {len(buffer)} records; need at least {l + 1}")
    trajs = [(s, t) for s, t in buffer._traj_arrays() if len(s) >= 2]
    if not trajs:
        raise SamplingError("no trajectory with at least 2 records")
    idx_a = np.empty(batch, dtype=np.int64)
    idx_b = np.empty(batch, dtype=np.int64)
    for k in range(batch):
        slots, times = trajs[int(rng.integers(len(trajs)))]
        n = len(slots)
        for _ in range(1000):
            a = int(rng.integers(n))
            g = int(rng.integers(1, l + 1))
            b = a + g
            if b < n and int(times[b]) - int(times[a]) == g:
                break
        else:
            raise SamplingError("could not draw a forward pair")
        idx_a[k], idx_b[k] = slots[a], slots[b]
    return PairBatchL(
        obs=buffer._obs[idx_a],
        goal_obs=buffer._obs[idx_b],
        actions=buffer.actions[idx_a].astype(np.int64),
        traj=buffer.traj[idx_a],
        t1=buffer.tidx[idx_a],
        t2=buffer.tidx[idx_b],
    )
