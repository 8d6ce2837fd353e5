"""Experimental protocol: trial matrices over (start, goal, repeat), success
curves, graph-quality statistics, the ablation table, and hyperparameter
sweeps. All ground-truth access (success checks, wrong-shortcut distances)
lives here, on the harness side.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .baselines import PixelSimilarityModel, TeachRepeatAgent, random_walk_step
from .mazes import MazeSpec
from .memory import SHORTCUT, MemoryGraph
from .nav import (
    EpisodeResult,
    LocalizationState,
    NavParams,
    localize,
    localize_global,
    navigate_episode,
    shortest_paths,
)
from .nets import obs_to_vec
from .recording import ExplorationRecording
from .seeding import rng_for
from .sim import AgentState, SimParams, DEFAULT_PARAMS, initial_observation, render, spawn_state, step

AGENT_KINDS = ("sptm", "sptm-noshortcuts", "sptm-perframe",
               "pixel", "pixel-norm", "teach-repeat", "random")

ABLATION_ROWS = ("sptm", "sptm-perframe", "sptm-noshortcuts",
                 "pixel", "pixel-norm", "teach-repeat")


@dataclass(frozen=True)
class TrialSpec:
    maze: str
    start: int          # spawn id, 0..3
    goal: int           # goal id, 0..3
    repeat: int         # 0..repeats-1
    budget: int
    agent: str
    seed: int


@dataclass
class TrialOutcome:
    spec: TrialSpec
    success: bool
    steps: int


@dataclass
class EvalReport:
    maze: str
    agent: str
    outcomes: list[TrialOutcome]
    graph_stats: dict = field(default_factory=dict)

    @property
    def n_trials(self) -> int:
        return len(self.outcomes)

    @property
    def successes(self) -> int:
        return sum(1 for o in self.outcomes if o.success)

    @property
    def success_rate(self) -> float:
        return self.successes / self.n_trials if self.outcomes else 0.0

    def curve(self, budget: int, points: int = 50) -> list[tuple[int, float]]:
        """(step budget, fraction succeeded by then): a non-decreasing step
        function sampled at `points` evenly spaced times plus the end."""
        times = sorted(o.steps for o in self.outcomes if o.success)
        samples = []
        grid = list(range(0, budget + 1, max(1, budget // points)))
        if grid[-1] != budget:
            grid.append(budget)
        k = 0
        for t in grid:
            while k < len(times) and times[k] <= t:
                k += 1
            samples.append((t, k / self.n_trials))
        return samples

    def to_dict(self) -> dict:
        return {
            "maze": self.maze,
            "agent": self.agent,
            "trials": self.n_trials,
            "successes": self.successes,
            "success_rate": self.success_rate,
            "graph_stats": self.graph_stats,
            "outcomes": [{"start": o.spec.start, "goal": o.spec.goal,
                          "repeat": o.spec.repeat, "success": o.success,
                          "steps": o.steps} for o in self.outcomes],
        }


def trial_matrix(maze: str, agent: str, budget: int, base_seed: int,
                 repeats: int = 6, n_starts: int = 4, n_goals: int = 4) -> list[TrialSpec]:
    """The full start x goal x repeat grid (4 x 4 x 6 = 96 by default)."""
    specs = []
    for s in range(n_starts):
        for g in range(n_goals):
            for r in range(repeats):
                seed = int(rng_for(base_seed, "trial", maze, agent, s, g, r).integers(2**31))
                specs.append(TrialSpec(maze=maze, start=s, goal=g, repeat=r,
                                       budget=budget, agent=agent, seed=seed))
    return specs


def goal_observation(maze: MazeSpec, goal_id: int, params: SimParams = DEFAULT_PARAMS) -> np.ndarray:
    """The image handed to the agent as 'reach this': rendered from the goal
    cell center facing an adjacent marker wall (deterministic)."""
    c, r = maze.goal_cells[goal_id]
    heading = 0.0
    for (dc, dr), h in (((1, 0), 0.0), ((0, 1), math.pi / 2),
                        ((-1, 0), math.pi), ((0, -1), 3 * math.pi / 2)):
        if not maze.is_free_cell(c + dc, r + dr):
            heading = h
            break
    x, y = maze.goal_position(goal_id)
    frame = render(AgentState(x=x, y=y, heading=heading), maze, params)
    return initial_observation(frame)


# ---------------------------------------------------------------------------
# Episode runners for the non-planning agents

def random_walk_episode(maze: MazeSpec, start: AgentState, goal_xy, budget: int,
                        seed: int, sim_params: SimParams = DEFAULT_PARAMS,
                        success_radius: float = 1.5) -> EpisodeResult:
    """Goal-agnostic uniform random walk; needs no rendering at all."""
    rng = np.random.default_rng(seed)
    gx, gy = goal_xy
    radius = success_radius * maze.cell_size
    st = start
    result = EpisodeResult(success=False, steps=0)
    if (st.x - gx) ** 2 + (st.y - gy) ** 2 < radius ** 2:
        result.success = True
        return result
    for t in range(budget):
        st = step(st, maze, random_walk_step(rng), sim_params)
        result.steps = t + 1
        if (st.x - gx) ** 2 + (st.y - gy) ** 2 < radius ** 2:
            result.success = True
            break
    return result


def teach_repeat_episode(maze: MazeSpec, start: AgentState, chain_graph: MemoryGraph,
                         model, recording: ExplorationRecording, goal_obs: np.ndarray,
                         goal_xy, budget: int, seed: int,
                         nav_params: NavParams = NavParams(),
                         sim_params: SimParams = DEFAULT_PARAMS,
                         success_radius: float = 1.5,
                         random_rate: float = 0.10) -> EpisodeResult:
    """Route following on the shortcut-free chain: localize with the learned
    similarity model (as the full method does), then replay or reverse the
    recorded actions."""
    if chain_graph.n_shortcuts != 0:
        raise ValueError("teach-and-repeat requires a shortcut-free chain graph")
    rng = np.random.default_rng(seed)
    agent = TeachRepeatAgent(recording.actions, chain_graph.time_indices,
                             random_rate=random_rate)
    v_goal, _ = localize_global(chain_graph, obs_to_vec(goal_obs), model,
                                k=nav_params.k_neighbors)
    result = EpisodeResult(success=False, steps=0, goal_vertex=v_goal,
                           goal_localizations=1)
    gx, gy = goal_xy
    radius = success_radius * maze.cell_size
    st = start
    if (st.x - gx) ** 2 + (st.y - gy) ** 2 < radius ** 2:
        result.success = True
        return result
    frame = render(st, maze, sim_params)
    prev = frame
    loc = LocalizationState()
    for t in range(budget):
        obs_vec = obs_to_vec(np.stack([prev, frame]))
        v_agent, loc = localize(chain_graph, obs_vec, model, loc, nav_params)
        action = agent.step(v_agent, v_goal, rng)
        st = step(st, maze, action, sim_params)
        prev = frame
        frame = render(st, maze, sim_params)
        result.steps = t + 1
        if (st.x - gx) ** 2 + (st.y - gy) ** 2 < radius ** 2:
            result.success = True
            break
    return result


# ---------------------------------------------------------------------------
# Graph statistics

def _bfs_mean_dist(n: int, edges: list[tuple[int, int]], goal: int) -> float:
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    dist = [-1] * n
    dist[goal] = 0
    q = deque([goal])
    while q:
        u = q.popleft()
        for w in adj[u]:
            if dist[w] < 0:
                dist[w] = dist[u] + 1
                q.append(w)
    reach = [d for d in dist if d >= 0]
    return float(sum(reach)) / len(reach)


def graph_stats(graph: MemoryGraph, goal_vertex: int) -> dict:
    """Mean hop distance to the goal over all vertices, with and without the
    shortcut edges."""
    n = graph.n_vertices
    all_edges = list(zip(graph.edges_u.tolist(), graph.edges_v.tolist()))
    temporal_only = [(u, v) for (u, v), t in
                     zip(all_edges, graph.edge_tags.tolist()) if t != SHORTCUT]
    with_sc = _bfs_mean_dist(n, all_edges, goal_vertex)
    without_sc = _bfs_mean_dist(n, temporal_only, goal_vertex)
    return {
        "goal_vertex": goal_vertex,
        "n_vertices": n,
        "n_shortcuts": graph.n_shortcuts,
        "mean_dist_with_shortcuts": with_sc,
        "mean_dist_without_shortcuts": without_sc,
        "ratio": without_sc / with_sc if with_sc > 0 else float("inf"),
    }


def wrong_shortcut_fraction(graph: MemoryGraph, recording: ExplorationRecording,
                            maze: MazeSpec, threshold_cells: float = 3.0) -> float:
    """Fraction of shortcut edges whose endpoints' ground-truth poses are more
    than `threshold_cells` apart (harness-side quality metric)."""
    pairs = graph.shortcut_pairs()
    if not pairs:
        return 0.0
    assert recording.poses is not None
    pos = recording.poses[graph.time_indices][:, :2]
    wrong = 0
    thr = threshold_cells * maze.cell_size
    for i, j in pairs:
        if np.hypot(*(pos[i] - pos[j])) > thr:
            wrong += 1
    return wrong / len(pairs)


# ---------------------------------------------------------------------------
# Protocol runner

@dataclass
class MazeBundle:
    """Everything one maze contributes to an evaluation run."""

    maze: MazeSpec
    recording: ExplorationRecording
    graphs: dict[str, MemoryGraph]          # per similarity/ablation variant
    models: dict[str, object]               # 'learned' | 'pixel' | 'pixel-norm'
    policy: object


def _graph_key_for_agent(agent: str) -> str:
    return {
        "sptm": "learned", "sptm-perframe": "learned",
        "sptm-noshortcuts": "learned-chain",
        "pixel": "pixel", "pixel-norm": "pixel-norm",
        "teach-repeat": "learned-chain",
    }.get(agent, "learned")


def _model_key_for_agent(agent: str) -> str:
    return {"pixel": "pixel", "pixel-norm": "pixel-norm"}.get(agent, "learned")


def run_trial(spec: TrialSpec, bundle: MazeBundle, nav_params: NavParams,
              sim_params: SimParams, success_radius: float) -> TrialOutcome:
    maze = bundle.maze
    start = spawn_state(maze, spec.start, heading_octant=(spec.repeat * 2) % 8)
    goal_xy = maze.goal_position(spec.goal)
    if spec.agent == "random":
        res = random_walk_episode(maze, start, goal_xy, spec.budget, spec.seed,
                                  sim_params, success_radius)
        return TrialOutcome(spec=spec, success=res.success, steps=res.steps)

    goal_obs = goal_observation(maze, spec.goal, sim_params)
    graph = bundle.graphs[_graph_key_for_agent(spec.agent)]
    model = bundle.models[_model_key_for_agent(spec.agent)]
    if spec.agent == "teach-repeat":
        res = teach_repeat_episode(maze, start, graph, model, bundle.recording,
                                   goal_obs, goal_xy, spec.budget, spec.seed,
                                   nav_params, sim_params, success_radius)
    else:
        params = nav_params
        if spec.agent == "sptm-perframe":
            params = NavParams(k_neighbors=nav_params.k_neighbors,
                               s_local=nav_params.s_local, local_window=0,
                               s_reach=nav_params.s_reach,
                               h_min=nav_params.h_min, h_max=nav_params.h_max)
        res = navigate_episode(maze, start, graph, model, bundle.policy, goal_obs,
                               goal_xy, budget=spec.budget, seed=spec.seed,
                               nav_params=params, sim_params=sim_params,
                               success_radius=success_radius,
                               record_trajectory=False)
    return TrialOutcome(spec=spec, success=res.success, steps=res.steps)


def run_protocol(bundles: dict[str, MazeBundle], agents: list[str], budget: int,
                 base_seed: int, repeats: int = 6,
                 nav_params: NavParams = NavParams(),
                 sim_params: SimParams = DEFAULT_PARAMS,
                 success_radius: float = 1.5,
                 progress=None) -> list[EvalReport]:
    """All trials for every (maze, agent); deterministic given seeds."""
    for agent in agents:
        if agent not in AGENT_KINDS:
            raise ValueError(f"unknown agent kind {agent!r} (know {AGENT_KINDS})")
    reports = []
    for maze_name, bundle in bundles.items():
        for agent in agents:
            specs = trial_matrix(maze_name, agent, budget, base_seed, repeats)
            outcomes = []
            for spec in specs:
                outcomes.append(run_trial(spec, bundle, nav_params, sim_params,
                                          success_radius))
                if progress is not None:
                    progress(maze_name, agent, len(outcomes), len(specs))
            rep = EvalReport(maze=maze_name, agent=agent, outcomes=outcomes)
            if agent in ("sptm", "pixel", "pixel-norm"):
                g = bundle.graphs[_graph_key_for_agent(agent)]
                stats = [graph_stats(g, int(localize_goal_vertex(bundle, agent, gid,
                                                                 nav_params, sim_params)))
                         for gid in range(4)]
                rep.graph_stats = {
                    "mean_ratio": float(np.mean([s["ratio"] for s in stats])),
                    "per_goal": stats,
                    "wrong_shortcut_fraction": wrong_shortcut_fraction(
                        g, bundle.recording, bundle.maze),
                }
            reports.append(rep)
    return reports


def localize_goal_vertex(bundle: MazeBundle, agent: str, goal_id: int,
                         nav_params: NavParams, sim_params: SimParams) -> int:
    graph = bundle.graphs[_graph_key_for_agent(agent)]
    model = bundle.models[_model_key_for_agent(agent)]
    obs = goal_observation(bundle.maze, goal_id, sim_params)
    v, _ = localize_global(graph, obs_to_vec(obs), model, k=nav_params.k_neighbors)
    return v


# ---------------------------------------------------------------------------
# Ablations and sweeps

def ablation_table(reports: list[EvalReport]) -> list[dict]:
    """One row per ablation variant, aggregated over the evaluated mazes."""
    rows = []
    for agent in ABLATION_ROWS:
        mine = [r for r in reports if r.agent == agent]
        if not mine:
            continue
        row = {
            "agent": agent,
            "success_rate": float(np.mean([r.success_rate for r in mine])),
        }
        for r in mine:
            row[f"success_{r.maze}"] = r.success_rate
        wrongs = [r.graph_stats.get("wrong_shortcut_fraction") for r in mine
                  if r.graph_stats.get("wrong_shortcut_fraction") is not None]
        if wrongs:
            row["wrong_shortcut_fraction"] = float(np.mean(wrongs))
        rows.append(row)
    return rows


# Hyperparameter sweep grids. The default grid varies one dimension at a
# time around the defaults (the same 22 combinations as the reference
# experiment table); the full grid is the complete product.
_SWEEP_DEFAULT = dict(local_window=10, shortcut_count=2000, subsample=4,
                      s_local=0.7, s_reach=0.95)
_SWEEP_DIMS = dict(
    subsample=(1, 2, 4, 8),
    shortcut_count=(1000, 2000, 4000),
    local_window=(0, 1, 5, 10, 20, 40),
    s_reach=(0.9, 0.95, 0.97),
    s_local=(0.6, 0.7, 0.8),
)
_SWEEP_TABLE_EXTRAS = (
    dict(local_window=5, shortcut_count=8000, subsample=1, s_local=0.7, s_reach=0.95),
    dict(local_window=10, shortcut_count=4000, subsample=2, s_local=0.7, s_reach=0.95),
    dict(local_window=20, shortcut_count=2000, subsample=4, s_local=0.7, s_reach=0.95),
    dict(local_window=40, shortcut_count=1000, subsample=8, s_local=0.7, s_reach=0.95),
)


def sweep_grid(name: str = "default") -> list[dict]:
    if name == "full":
        rows = []
        for ss in _SWEEP_DIMS["subsample"]:
            for k in _SWEEP_DIMS["shortcut_count"]:
                for w in _SWEEP_DIMS["local_window"]:
                    for sr in _SWEEP_DIMS["s_reach"]:
                        for sl in _SWEEP_DIMS["s_local"]:
                            rows.append(dict(local_window=w, shortcut_count=k,
                                             subsample=ss, s_local=sl, s_reach=sr))
        return rows
    if name == "default":
        rows = [dict(_SWEEP_DEFAULT, local_window=0),
                dict(_SWEEP_DEFAULT)]
        for k in _SWEEP_DIMS["shortcut_count"]:
            rows.append(dict(_SWEEP_DEFAULT, shortcut_count=k))
        for w in (1, 5, 10):
            rows.append(dict(_SWEEP_DEFAULT, local_window=w))
        for sr in _SWEEP_DIMS["s_reach"]:
            rows.append(dict(_SWEEP_DEFAULT, s_reach=sr))
        for sl in _SWEEP_DIMS["s_local"]:
            rows.append(dict(_SWEEP_DEFAULT, s_local=sl))
        for ss in _SWEEP_DIMS["subsample"]:
            rows.append(dict(_SWEEP_DEFAULT, subsample=ss))
        rows.extend(dict(r) for r in _SWEEP_TABLE_EXTRAS)
        return rows
    raise ValueError(f"unknown sweep grid {name!r}")


# ---------------------------------------------------------------------------
# Report writers

def reports_to_json(reports: list[EvalReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2)


def reports_to_csv(reports: list[EvalReport]) -> str:
    lines = ["maze,agent,trials,successes,success_rate"]
    for r in reports:
        lines.append(f"{r.maze},{r.agent},{r.n_trials},{r.successes},{r.success_rate:.4f}")
    return "\n".join(lines) + "\n"


def curves_to_csv(report: EvalReport, budget: int) -> str:
    lines = ["time,fraction"]
    for t, f in report.curve(budget):
        lines.append(f"{t},{f:.4f}")
    return "\n".join(lines) + "\n"
