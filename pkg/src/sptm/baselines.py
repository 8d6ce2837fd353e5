"""Non-learned baselines: a uniform random walker, per-pixel visual
similarity (with and without local contrast normalization), the
teach-and-repeat route follower, and the automated explorer that stands in
for a human walkthrough.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .mazes import MazeSpec
from .recording import ExplorationRecording
from .sim import Action, AgentState, SimParams, DEFAULT_PARAMS, render_poses, spawn_state, step

OPPOSITE_ACTION = {
    Action.DO_NOTHING: Action.DO_NOTHING,
    Action.MOVE_FORWARD: Action.MOVE_BACKWARD,
    Action.MOVE_BACKWARD: Action.MOVE_FORWARD,
    Action.MOVE_LEFT: Action.MOVE_RIGHT,
    Action.MOVE_RIGHT: Action.MOVE_LEFT,
    Action.TURN_LEFT: Action.TURN_RIGHT,
    Action.TURN_RIGHT: Action.TURN_LEFT,
}

# The random agent never idles: DoNothing would only thin out the motion data.
RANDOM_WALK_ACTIONS = np.array([
    Action.MOVE_FORWARD, Action.MOVE_BACKWARD, Action.MOVE_LEFT,
    Action.MOVE_RIGHT, Action.TURN_LEFT, Action.TURN_RIGHT,
], dtype=np.int8)


def random_walk_step(rng: np.random.Generator) -> Action:
    """Uniform draw over the 6 motion actions."""
    return Action(int(RANDOM_WALK_ACTIONS[rng.integers(len(RANDOM_WALK_ACTIONS))]))


def random_walk_actions(rng: np.random.Generator, n: int) -> np.ndarray:
    return RANDOM_WALK_ACTIONS[rng.integers(0, len(RANDOM_WALK_ACTIONS), size=n)]


# ---------------------------------------------------------------------------
# Per-pixel similarity

@dataclass
class PixelSimilarityModel:
    """Cosine similarity on downsampled grayscale frames, exposed through the
    same embed/head interface as the learned similarity model so it can stand
    in for it anywhere (graph building, localization, waypoints).

    Defaults keep the 4x-per-axis downsample of the full-scale recipe: a
    32x24 frame becomes 8x6, and the contrast-normalization patch scales to
    2x2. Scores are cosine in [-1,1], remapped affinely to [0,1].
    """

    frame_width: int = 32
    frame_height: int = 24
    factor: int = 4
    normalize: bool = False
    patch: int = 2
    embed_dim: int = field(init=False)

    def __post_init__(self):
        if self.frame_width % self.factor or self.frame_height % self.factor:
            raise ValueError("frame size must be divisible by the downsample factor")
        self.embed_dim = (self.frame_width // self.factor) * (self.frame_height // self.factor)

    def _features(self, frames: np.ndarray) -> np.ndarray:
        """uint8 frames [B,H,W,3] -> feature rows [B, h*w] float64."""
        f = np.asarray(frames, dtype=np.float64)
        gray = f.mean(axis=-1)  # [B,H,W]
        b, h, w = gray.shape
        k = self.factor
        small = gray.reshape(b, h // k, k, w // k, k).mean(axis=(2, 4))
        if self.normalize:
            p = self.patch
            hh, ww = small.shape[1], small.shape[2]
            blocks = small.reshape(b, hh // p, p, ww // p, p)
            mean = blocks.mean(axis=(2, 4), keepdims=True)
            std = blocks.std(axis=(2, 4), keepdims=True)
            blocks = (blocks - mean) / np.maximum(std, 1e-6)
            small = blocks.reshape(b, hh, ww)
        return small.reshape(b, -1)

    def embed(self, x: np.ndarray) -> np.ndarray:
        """Observation vectors [B, 2*H*W*3] in [0,1] -> features of the
        current (second) frame, matching the learned model's embed contract."""
        x = np.atleast_2d(x)
        hw3 = self.frame_height * self.frame_width * 3
        cur = (x[:, hw3:] * 255.0).reshape(-1, self.frame_height, self.frame_width, 3)
        return self._features(cur)

    def head_similarity(self, e1: np.ndarray, e2: np.ndarray) -> np.ndarray:
        e1 = np.atleast_2d(e1)
        e2 = np.atleast_2d(e2)
        n1 = np.linalg.norm(e1, axis=1)
        n2 = np.linalg.norm(e2, axis=1)
        tiny = 1e-12
        both_zero = (n1 < tiny) & (n2 < tiny)
        one_zero = ((n1 < tiny) | (n2 < tiny)) & ~both_zero
        denom = np.maximum(n1 * n2, tiny)
        cos = (e1 * e2).sum(axis=1) / denom
        cos = np.where(both_zero, 1.0, cos)
        cos = np.where(one_zero, 0.0, cos)
        cos = np.clip(cos, -1.0, 1.0)
        return (cos + 1.0) / 2.0

    def similarity(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        return self.head_similarity(self.embed(x1), self.embed(x2))


# ---------------------------------------------------------------------------
# Teach and repeat

class TeachRepeatAgent:
    """Replays (or reverses) the exploration action sequence.

    Bound to a shortcut-free chain graph over the recording. Given where the
    agent and the goal are localized on the chain, it either replays the
    recorded action at the current position (goal ahead) or the opposite of
    the previous recorded action (goal behind), with a fixed fraction of
    uniformly random actions to break out of divergence.
    """

    def __init__(self, recorded_actions: np.ndarray, vertex_time_indices: np.ndarray,
                 random_rate: float = 0.10):
        if not 0.0 <= random_rate <= 1.0:
            raise ValueError("random_rate must be in [0,1]")
        self.actions = np.asarray(recorded_actions, dtype=np.int8)
        self.vertex_time = np.asarray(vertex_time_indices, dtype=np.int64)
        self.random_rate = random_rate

    def step(self, current_vertex: int, goal_vertex: int, rng: np.random.Generator) -> Action:
        if rng.random() < self.random_rate:
            return Action(int(rng.integers(len(Action))))
        t = int(self.vertex_time[current_vertex])
        last = len(self.actions) - 1
        if goal_vertex > current_vertex:
            return Action(int(self.actions[min(t, last)]))
        return OPPOSITE_ACTION[Action(int(self.actions[max(t - 1, 0)]))]


# ---------------------------------------------------------------------------
# Automated exploration


_CARDINAL = (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)  # E, S, W, N in screen coords
_CARD_DELTA = ((1, 0), (0, 1), (-1, 0), (0, -1))


def _nearest_cardinal(heading: float) -> int:
    return int(round(heading / (math.pi / 2))) % 4


def _turns_to(current_card: int, target_card: int, per_quarter: int) -> list[Action]:
    """Shortest turn-action sequence between cardinal directions, given how
    many logical turn actions make a quarter turn."""
    diff = (target_card - current_card) % 4
    if diff == 0:
        return []
    if diff == 1:
        return [Action.TURN_RIGHT] * per_quarter
    if diff == 3:
        return [Action.TURN_LEFT] * per_quarter
    return [Action.TURN_RIGHT] * (2 * per_quarter)


def _bfs_path(maze: MazeSpec, start: tuple[int, int], targets: set[tuple[int, int]]):
    """Cells (col,row) from start to the nearest target, or None."""
    prev: dict[tuple[int, int], tuple[int, int] | None] = {start: None}
    q = deque([start])
    while q:
        cell = q.popleft()
        if cell in targets:
            path = [cell]
            while prev[path[-1]] is not None:
                path.append(prev[path[-1]])
            return path[::-1]
        c, r = cell
        for dc, dr in _CARD_DELTA:
            nxt = (c + dc, r + dr)
            if maze.is_free_cell(*nxt) and nxt not in prev:
                prev[nxt] = cell
                q.append(nxt)
    return None


def auto_explore(maze: MazeSpec, steps: int, seed: int = 0,
                 params: SimParams = DEFAULT_PARAMS, spawn_id: int = 0) -> ExplorationRecording:
    """Wall-following walkthrough with random perturbation.

    Right-hand wall following at cell granularity, a random action roughly
    every few steps, short random look-arounds, and a breadth-first rescue
    toward the nearest unvisited cell whenever progress stalls, so desk-scale
    mazes get fully covered well inside the usual step budget. Frames are
    rendered from the recorded poses in one batch at the end.
    """
    rng = np.random.default_rng(seed)
    per_quarter = max(1, round((math.pi / 2) / (params.turn_step * params.action_repeat)))
    st = spawn_state(maze, spawn_id, heading_octant=0)
    poses = [(st.x, st.y, st.heading)]
    actions: list[int] = []
    visited = {maze.cell_of(st.x, st.y)}
    free_cells = {(c, r) for r in range(maze.rows) for c in range(maze.cols)
                  if maze.is_free_cell(c, r)}
    pending: deque[int] = deque()
    since_new = 0

    def push_turns_then_forward(target_card: int, card: int):
        pending.extend(int(a) for a in _turns_to(card, target_card, per_quarter))
        pending.append(int(Action.MOVE_FORWARD))

    while len(actions) < steps:
        if pending:
            a = pending.popleft()
        else:
            cell = maze.cell_of(st.x, st.y)
            card = _nearest_cardinal(st.heading)
            roll = rng.random()
            if since_new > 50 and visited < free_cells:
                path = _bfs_path(maze, cell, free_cells - visited)
                if path and len(path) > 1:
                    cur = cell
                    ccard = card
                    for nxt in path[1:]:
                        d = (nxt[0] - cur[0], nxt[1] - cur[1])
                        tcard = _CARD_DELTA.index(d)
                        push_turns_then_forward(tcard, ccard)
                        ccard = tcard
                        cur = nxt
                since_new = 0
                continue
            if roll < 0.10:
                a = int(random_walk_step(rng))
            elif roll < 0.14:
                # look-around: a couple of random turns in place
                t = Action.TURN_LEFT if rng.random() < 0.5 else Action.TURN_RIGHT
                pending.extend([int(t)] * int(rng.integers(1, 2 * per_quarter)))
                continue
            else:
                # right-hand rule over cardinal neighbors
                order = [(card + 1) % 4, card, (card + 3) % 4, (card + 2) % 4]
                a = None
                for tcard in order:
                    dc, dr = _CARD_DELTA[tcard]
                    if maze.is_free_cell(cell[0] + dc, cell[1] + dr):
                        push_turns_then_forward(tcard, card)
                        break
                continue
        st = step(st, maze, a, params)
        actions.append(int(a))
        poses.append((st.x, st.y, st.heading))
        cell = maze.cell_of(st.x, st.y)
        if cell not in visited:
            visited.add(cell)
            since_new = 0
        else:
            since_new += 1

    pose_arr = np.array(poses, dtype=np.float64)
    frames = render_poses(maze, pose_arr[:, 0], pose_arr[:, 1], pose_arr[:, 2], params)
    return ExplorationRecording(
        frames=frames,
        actions=np.array(actions, dtype=np.int8),
        poses=pose_arr,
        maze_name=maze.name,
    )
