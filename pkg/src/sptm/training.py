"""Self-supervised training for the similarity and locomotion networks.

Data comes from a random agent walking texture-randomized variants of the
training maze. Training alternates buffer refills with mini-batch Adam
iterations: one round is `steps_per_round` random-agent steps followed by
`iters_per_round` updates on batches of 64. Held-out metrics come from a
separate rollout never placed in the buffer.
"""

from __future__ import annotations

import math
import queue
import threading
from dataclasses import dataclass, field

import numpy as np

from . import mazes
from .baselines import random_walk_actions
from .nets import AdamState, LocomotionPolicy, SimilarityModel, adam_step, obs_batch_to_mat
from .replay import ReplayBuffer, sample_pairs_l, sample_pairs_r
from .seeding import rng_for
from .sim import DEFAULT_PARAMS, SimParams, render_poses, spawn_state, step


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainSchedule:
    total_iterations: int = 30_000
    steps_per_round: int = 10_000
    iters_per_round: int = 50
    batch_size: int = 64
    buffer_capacity: int = 10_000
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    close_steps: int = 20          # l: positives at most this far apart
    margin: int = 5                # negatives at least margin*l apart
    eval_every: int = 1000
    heldout_pairs: int = 512
    prefetch: bool = True          # generate the next round while training


@dataclass
class RolloutEnv:
    """Per-round rollout source over texture-randomized variants of one layout.

    Round k uses texture seed derived from (seed, k), a random spawn, and a
    uniformly random motion-action sequence; frames are batch-rendered from
    the recorded poses.
    """

    layout: str = "train"
    seed: int = 0
    params: SimParams = field(default_factory=lambda: DEFAULT_PARAMS)
    randomize_textures: bool = True
    texture_variants: int = 24    # fixed pool of texture-randomized worlds

    def rollout(self, round_idx: int, n_steps: int, tag: str = "round") -> tuple[np.ndarray, np.ndarray]:
        rng = rng_for(self.seed, "rollout", tag, round_idx)
        if not self.randomize_textures:
            tex_seed = 0
        elif tag == "round":
            # cycle a fixed pool, as exploration data in a new variant each
            # round; held-out rollouts draw fresh seeds outside the pool
            variant = round_idx % self.texture_variants
            tex_seed = int(rng_for(self.seed, "texture-pool", variant).integers(2**31))
        else:
            tex_seed = int(rng.integers(2**31))
        maze = mazes.builtin_maze(self.layout, tex_seed)
        st = spawn_state(maze, int(rng.integers(len(maze.spawn_cells))),
                         heading_octant=int(rng.integers(8)))
        actions = random_walk_actions(rng, n_steps)
        poses = np.empty((n_steps + 1, 3), dtype=np.float64)
        poses[0] = (st.x, st.y, st.heading)
        for t in range(n_steps):
            st = step(st, maze, int(actions[t]), self.params)
            poses[t + 1] = (st.x, st.y, st.heading)
        frames = render_poses(maze, poses[:, 0], poses[:, 1], poses[:, 2], self.params)
        return frames, actions


def _round_iter(env: RolloutEnv, n_rounds: int, steps: int, prefetch: bool):
    """Yield (round_idx, frames, actions); optionally produced one round ahead
    on a worker thread. Per-round seeding keeps results identical either way."""
    if not prefetch:
        for k in range(n_rounds):
            frames, actions = env.rollout(k, steps)
            yield k, frames, actions
        return
    q: queue.Queue = queue.Queue(maxsize=1)

    def worker():
        for k in range(n_rounds):
            q.put((k, *env.rollout(k, steps)))
        q.put(None)

    t = threading.Thread(target=worker, daemon=True)
    t.start()
    while True:
        item = q.get()
        if item is None:
            break
        yield item
    t.join()


def _heldout_pairs_r(env: RolloutEnv, schedule: TrainSchedule) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Balanced held-out pair set from a dedicated rollout (never trained on)."""
    frames, actions = env.rollout(0, schedule.steps_per_round, tag="heldout")
    buf = ReplayBuffer(capacity=len(actions))
    buf.add_trajectory(frames, actions, traj_id=0)
    rng = rng_for(env.seed, "heldout-pairs-r")
    batch = sample_pairs_r(buf, schedule.heldout_pairs, rng,
                           l=schedule.close_steps, margin=schedule.margin)
    return (obs_batch_to_mat(batch.obs1), obs_batch_to_mat(batch.obs2), batch.labels)


def _heldout_pairs_l(env: RolloutEnv, schedule: TrainSchedule):
    frames, actions = env.rollout(0, schedule.steps_per_round, tag="heldout")
    buf = ReplayBuffer(capacity=len(actions))
    buf.add_trajectory(frames, actions, traj_id=0)
    rng = rng_for(env.seed, "heldout-pairs-l")
    batch = sample_pairs_l(buf, schedule.heldout_pairs, rng, l=schedule.close_steps)
    return (obs_batch_to_mat(batch.obs), obs_batch_to_mat(batch.goal_obs), batch.actions)


def heldout_accuracy_r(model: SimilarityModel, heldout) -> float:
    x1, x2, y = heldout
    pred = model.similarity(x1, x2) > 0.5
    return float((pred == (y == 1)).mean())


def heldout_accuracy_l(policy: LocomotionPolicy, heldout) -> float:
    x, g, a = heldout
    pred = policy.action_probs(x, g).argmax(axis=1)
    return float((pred == a).mean())


def majority_action_rate(heldout) -> float:
    _, _, a = heldout
    counts = np.bincount(a)
    return float(counts.max() / counts.sum())


@dataclass
class TrainLog:
    rows: list[tuple[int, float, float]] = field(default_factory=list)  # iter, loss, heldout acc (nan between evals)

    def add(self, iteration: int, loss: float, acc: float = math.nan):
        self.rows.append((iteration, loss, acc))

    def first_loss(self) -> float:
        return self.rows[0][1]

    def final_accuracy(self) -> float:
        accs = [a for _, _, a in self.rows if not math.isnan(a)]
        return accs[-1] if accs else math.nan

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("iteration,loss,heldout_accuracy\n")
            for it, loss, acc in self.rows:
                f.write(f"{it},{loss:.6f},{'' if math.isnan(acc) else f'{acc:.4f}'}\n")


def _train(model, sampler, env: RolloutEnv, schedule: TrainSchedule, seed: int,
           heldout, accuracy_fn, progress=None) -> TrainLog:
    log = TrainLog()
    if schedule.total_iterations <= 0:
        return log
    buf = ReplayBuffer(capacity=schedule.buffer_capacity)
    state = AdamState(model.params)
    rng = rng_for(seed, "train", model.kind)
    n_rounds = math.ceil(schedule.total_iterations / schedule.iters_per_round)
    it = 0
    for k, frames, actions in _round_iter(env, n_rounds, schedule.steps_per_round, schedule.prefetch):
        buf.add_trajectory(frames, actions, traj_id=k)
        iters = min(schedule.iters_per_round, schedule.total_iterations - it)
        for _ in range(iters):
            batch = sampler(buf, schedule.batch_size, rng, schedule)
            loss, grads = model.loss_and_grads(batch)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss {loss} at iteration {it}")
            adam_step(model.params, grads, state, lr=schedule.lr,
                      beta1=schedule.beta1, beta2=schedule.beta2, eps=schedule.eps)
            acc = math.nan
            if it == 0 or (it + 1) % schedule.eval_every == 0 or it + 1 == schedule.total_iterations:
                acc = accuracy_fn(model, heldout)
                if progress is not None:
                    progress(it + 1, loss, acc)
            log.add(it + 1, loss, acc)
            it += 1
    return log


def train_similarity(env: RolloutEnv, schedule: TrainSchedule, seed: int = 0,
                     model: SimilarityModel | None = None, progress=None
                     ) -> tuple[SimilarityModel, TrainLog]:
    """Train the temporal-proximity classifier; returns (model, log)."""
    if model is None:
        model = SimilarityModel(frame_width=env.params.frame_width,
                                frame_height=env.params.frame_height,
                                seed=int(rng_for(seed, "init-r").integers(2**31)))
    if schedule.total_iterations <= 0:
        return model, TrainLog()
    heldout = _heldout_pairs_r(env, schedule)

    def sampler(buf, batch_size, rng, sch):
        b = sample_pairs_r(buf, batch_size, rng, l=sch.close_steps, margin=sch.margin)
        return (obs_batch_to_mat(b.obs1), obs_batch_to_mat(b.obs2), b.labels)

    log = _train(model, sampler, env, schedule, seed, heldout, heldout_accuracy_r, progress)
    return model, log


def train_locomotion(env: RolloutEnv, schedule: TrainSchedule, seed: int = 0,
                     policy: LocomotionPolicy | None = None, progress=None
                     ) -> tuple[LocomotionPolicy, TrainLog]:
    """Train the short-range goal-reaching policy; returns (policy, log)."""
    if policy is None:
        policy = LocomotionPolicy(frame_width=env.params.frame_width,
                                  frame_height=env.params.frame_height,
                                  seed=int(rng_for(seed, "init-l").integers(2**31)))
    if schedule.total_iterations <= 0:
        return policy, TrainLog()
    heldout = _heldout_pairs_l(env, schedule)

    def sampler(buf, batch_size, rng, sch):
        b = sample_pairs_l(buf, batch_size, rng, l=sch.close_steps)
        return (obs_batch_to_mat(b.obs), obs_batch_to_mat(b.goal_obs), b.actions)

    log = _train(policy, sampler, env, schedule, seed, heldout, heldout_accuracy_l, progress)
    return policy, log
