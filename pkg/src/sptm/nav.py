"""Navigation on top of the memory graph: self-localization (global k-NN
median and temporally consistent local search), single-source shortest paths,
adaptive waypoint selection, and the closed-loop episode runner.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .mazes import MazeSpec
from .memory import SHORTCUT, MemoryGraph
from .nets import obs_to_vec
from .sim import AgentState, SimParams, DEFAULT_PARAMS, initial_observation, render, step


@dataclass
class LocalizationState:
    current_vertex: int | None = None
    last_similarity: float = 0.0


@dataclass
class NavParams:
    k_neighbors: int = 5
    s_local: float = 0.7        # accept local search above this similarity
    local_window: int = 10      # W_loc; 0 disables local search entirely
    s_reach: float = 0.95       # waypoint must look this reachable
    h_min: int = 1
    h_max: int = 7


@dataclass
class Plan:
    """Single-source shortest-path tree toward one goal vertex."""

    goal_vertex: int
    dist_to_goal: np.ndarray    # int64 [N] hop counts
    next_hop: np.ndarray        # int64 [N]: neighbor one hop closer (goal -> itself)


def _embed_query(obs_vec, model, obs_emb):
    if obs_emb is None:
        obs_emb = model.embed(np.atleast_2d(obs_vec))
    return np.atleast_2d(obs_emb)


def _sims_against(model, emb, vertex_embeddings: np.ndarray) -> np.ndarray:
    return model.head_similarity(
        np.broadcast_to(emb, (len(vertex_embeddings),) + emb.shape[1:]), vertex_embeddings)


def localize_global(graph: MemoryGraph, obs_vec: np.ndarray, model,
                    k: int = 5, obs_emb: np.ndarray | None = None) -> tuple[int, float]:
    """k-NN median localization over the whole memory.

    Scores the observation against every vertex embedding, takes the k most
    similar vertices (ties toward lower index), and returns the one with the
    median time index, plus the top similarity (the retrieval confidence).
    """
    emb = _embed_query(obs_vec, model, obs_emb)
    sims = _sims_against(model, emb, graph.embeddings)
    return _knn_median(sims, np.arange(graph.n_vertices), k)


def _knn_median(sims: np.ndarray, vertex_ids: np.ndarray, k: int) -> tuple[int, float]:
    k = min(k, len(sims))
    order = np.argsort(-sims, kind="stable")[:k]   # stable: equal scores -> lower index
    top = np.sort(vertex_ids[order])
    return int(top[(k - 1) // 2]), float(sims[order[0]])


def _local_candidates(graph: MemoryGraph, around: int, window: int) -> np.ndarray:
    """Vertices within +-window of `around`, extended once through shortcut
    edges incident to that window. Cached per graph: it is immutable."""
    cache = getattr(graph, "_nbhd_cache", None)
    if cache is None:
        cache = {}
        object.__setattr__(graph, "_nbhd_cache", cache)
    key = (around, window)
    hit = cache.get(key)
    if hit is not None:
        return hit
    n = graph.n_vertices
    lo, hi = max(0, around - window), min(n - 1, around + window)
    spans = [(lo, hi)]
    m = graph.edge_tags == SHORTCUT
    su, sv = graph.edges_u[m], graph.edges_v[m]
    in_u = (su >= lo) & (su <= hi)
    in_v = (sv >= lo) & (sv <= hi)
    for other in np.concatenate([sv[in_u], su[in_v]]):
        spans.append((max(0, int(other) - window), min(n - 1, int(other) + window)))
    out = np.unique(np.concatenate([np.arange(a, b + 1) for a, b in spans]))
    if len(cache) > 8192:
        cache.clear()
    cache[key] = out
    return out


def localize(graph: MemoryGraph, obs_vec: np.ndarray, model, state: LocalizationState,
             params: NavParams = NavParams(),
             obs_emb: np.ndarray | None = None) -> tuple[int, LocalizationState]:
    """Temporally consistent localization.

    With a previous vertex, retrieve the nearest neighbor inside its local
    neighborhood only, accepting it when its similarity clears s_local;
    otherwise (or when the window is 0, or no previous vertex yet) fall back
    to a global k-NN median search.
    """
    if state.current_vertex is not None and params.local_window > 0:
        emb = _embed_query(obs_vec, model, obs_emb)
        cand = _local_candidates(graph, state.current_vertex, params.local_window)
        sims = _sims_against(model, emb, graph.embeddings[cand])
        best_pos = int(np.argmax(sims))   # first (lowest-index) max on ties
        best = float(sims[best_pos])
        if best > params.s_local:
            v = int(cand[best_pos])
            return v, LocalizationState(current_vertex=v, last_similarity=best)
    v, best = localize_global(graph, obs_vec, model, k=params.k_neighbors, obs_emb=obs_emb)
    return v, LocalizationState(current_vertex=v, last_similarity=best)


def shortest_paths(graph: MemoryGraph, goal_vertex: int) -> Plan:
    """Hop distances from every vertex to the goal (Dijkstra, unit weights)."""
    n = graph.n_vertices
    if not 0 <= goal_vertex < n:
        raise ValueError(f"goal vertex {goal_vertex} out of range [0,{n})")
    adj = graph.adjacency()
    dist = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    nxt = np.arange(n, dtype=np.int64)
    dist[goal_vertex] = 0
    heap = [(0, goal_vertex)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        nd = d + 1
        for w in adj[u]:
            if nd < dist[w]:
                dist[w] = nd
                nxt[w] = u
                heapq.heappush(heap, (nd, int(w)))
    return Plan(goal_vertex=goal_vertex, dist_to_goal=dist, next_hop=nxt)


def path_from(plan: Plan, v: int, max_len: int | None = None) -> list[int]:
    """Vertices along the shortest path from v to the goal (inclusive)."""
    path = [v]
    while path[-1] != plan.goal_vertex:
        if max_len is not None and len(path) > max_len:
            break
        path.append(int(plan.next_hop[path[-1]]))
    return path


def select_waypoint(graph: MemoryGraph, plan: Plan, v_agent: int, obs_vec: np.ndarray,
                    model, params: NavParams = NavParams(),
                    obs_emb: np.ndarray | None = None) -> tuple[int, float]:
    """The furthest shortest-path vertex within [h_min, h_max] hops that still
    looks confidently reachable (similarity > s_reach); h_min if none does;
    the goal itself when it is fewer than h_min hops away."""
    hops_to_goal = int(plan.dist_to_goal[v_agent])
    if hops_to_goal < params.h_min:
        return plan.goal_vertex, 1.0
    path = path_from(plan, v_agent, max_len=params.h_max + 1)
    hi = min(params.h_max, len(path) - 1)
    cand = path[params.h_min: hi + 1]
    emb = _embed_query(obs_vec, model, obs_emb)
    sims = _sims_against(model, emb, graph.embeddings[cand])
    ok = np.where(sims > params.s_reach)[0]
    if len(ok) > 0:
        pick = int(ok[-1])
    else:
        pick = 0  # h_min fallback: keep moving rather than stall
    return int(cand[pick]), float(sims[pick])


@dataclass
class EpisodeResult:
    success: bool
    steps: int
    trajectory: list[dict] = field(default_factory=list)   # per-step telemetry
    goal_vertex: int = -1
    goal_localizations: int = 0
    plan_builds: int = 0


def navigate_episode(maze: MazeSpec, start: AgentState, graph: MemoryGraph, model,
                     policy, goal_obs: np.ndarray, goal_xy: tuple[float, float],
                     budget: int = 5000, seed: int = 0,
                     nav_params: NavParams = NavParams(),
                     sim_params: SimParams = DEFAULT_PARAMS,
                     success_radius: float = 1.5,
                     record_trajectory: bool = True) -> EpisodeResult:
    """Closed-loop goal-directed navigation.

    The goal is localized once and the shortest-path tree built once. Each
    step: localize (temporally consistent), pick a waypoint, sample an action
    from the stochastic locomotion policy toward the waypoint's stored
    observation, and step the simulator. Success is a harness-side
    ground-truth proximity check, invisible to the agent.
    """
    if graph.n_vertices < 1:
        raise ValueError("graph is empty")
    rng = np.random.default_rng(seed)
    goal_vec = obs_to_vec(goal_obs)
    v_goal, _ = localize_global(graph, goal_vec, model, k=nav_params.k_neighbors)
    plan = shortest_paths(graph, v_goal)
    result = EpisodeResult(success=False, steps=0, goal_vertex=v_goal,
                           goal_localizations=1, plan_builds=1)

    gx, gy = goal_xy
    radius = success_radius * maze.cell_size

    st = start
    frame = render(st, maze, sim_params)
    prev = frame
    loc = LocalizationState()

    def near_goal(s: AgentState) -> bool:
        return (s.x - gx) ** 2 + (s.y - gy) ** 2 < radius ** 2

    if near_goal(st):
        result.success = True
        return result

    for t in range(budget):
        obs_vec = obs_to_vec(np.stack([prev, frame]))
        obs_emb = model.embed(np.atleast_2d(obs_vec))
        v_agent, loc = localize(graph, obs_vec, model, loc, nav_params, obs_emb=obs_emb)
        v_way, way_sim = select_waypoint(graph, plan, v_agent, obs_vec, model, nav_params,
                                         obs_emb=obs_emb)
        way_vec = obs_to_vec(graph.observation(v_way))
        probs = policy.action_probs(obs_vec, way_vec)
        action = int(rng.choice(len(probs), p=probs))
        st = step(st, maze, action, sim_params)
        prev = frame
        frame = render(st, maze, sim_params)
        result.steps = t + 1
        if record_trajectory:
            result.trajectory.append({
                "t": t, "x": st.x, "y": st.y, "heading": st.heading,
                "v_agent": v_agent, "v_waypoint": v_way, "action": action,
                "loc_similarity": loc.last_similarity, "waypoint_similarity": way_sim,
            })
        if near_goal(st):
            result.success = True
            break
    return result


def write_trajectory_csv(result: EpisodeResult, path) -> None:
    cols = ["t", "x", "y", "heading", "v_agent", "v_waypoint", "action",
            "loc_similarity", "waypoint_similarity"]
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for row in result.trajectory:
            f.write(",".join(f"{row[c]:.6f}" if isinstance(row[c], float) else str(row[c])
                             for c in cols) + "\n")
