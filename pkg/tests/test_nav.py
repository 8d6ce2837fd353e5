from collections import deque

import numpy as np
import pytest

from sptm.memory import GraphParams, MemoryGraph, SHORTCUT, TEMPORAL
from sptm.nav import (
    LocalizationState,
    NavParams,
    Plan,
    localize,
    localize_global,
    path_from,
    select_waypoint,
    shortest_paths,
)


def chain_graph(n, shortcuts=(), embeddings=None):
    """Temporal chain 0..n-1 plus given shortcut pairs."""
    eu = list(range(n - 1)) + [u for u, _ in shortcuts]
    ev = list(range(1, n)) + [v for _, v in shortcuts]
    tags = [TEMPORAL] * (n - 1) + [SHORTCUT] * len(shortcuts)
    if embeddings is None:
        embeddings = np.arange(n, dtype=np.float64)[:, None]
    return MemoryGraph(
        observations=np.zeros((n, 2, 1, 1, 3), dtype=np.uint8),
        embeddings=embeddings,
        time_indices=np.arange(n, dtype=np.int64),
        edges_u=np.array(eu, dtype=np.int32),
        edges_v=np.array(ev, dtype=np.int32),
        edge_tags=np.array(tags, dtype=np.uint8),
        params=GraphParams(),
    )


class TableModel:
    """Similarity driven by a lookup: sim(query, vertex v) = table[v].
    Embeddings are vertex ids; the query embeds to -1."""

    def __init__(self, table):
        self.table = np.asarray(table, dtype=np.float64)

    def embed(self, x):
        x = np.atleast_2d(x)
        return np.full((x.shape[0], 1), -1.0)

    def head_similarity(self, e1, e2):
        e1, e2 = np.atleast_2d(e1), np.atleast_2d(e2)
        out = np.empty(len(e1))
        for i, (a, b) in enumerate(zip(e1, e2)):
            v = b[0] if a[0] < 0 else a[0]
            out[i] = self.table[int(v)]
        return out


def bfs_oracle(n, edges, goal):
    """Independent hop-distance computation used to check Dijkstra."""
    adj = [[] for _ in range(n)]
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
    return dist


def test_chain_distances():
    g = chain_graph(4)
    plan = shortest_paths(g, 3)
    assert plan.dist_to_goal.tolist() == [3, 2, 1, 0]


def test_shortcut_shortens_path():
    g = chain_graph(10, shortcuts=[(0, 9)])
    plan = shortest_paths(g, 9)
    assert plan.dist_to_goal[0] == 1


def test_dijkstra_matches_bfs_on_random_graphs():
    rng = np.random.default_rng(42)
    for _ in range(60):
        n = int(rng.integers(2, 60))
        n_sc = int(rng.integers(0, 20))
        shortcuts = set()
        for _ in range(200):
            if len(shortcuts) >= n_sc:
                break
            u, v = sorted(rng.integers(0, n, size=2).tolist())
            if v - u > 1:
                shortcuts.add((u, v))
        g = chain_graph(n, sorted(shortcuts))
        goal = int(rng.integers(n))
        plan = shortest_paths(g, goal)
        edges = list(zip(g.edges_u.tolist(), g.edges_v.tolist()))
        assert plan.dist_to_goal.tolist() == bfs_oracle(n, edges, goal)


def test_plan_triangle_property():
    g = chain_graph(30, shortcuts=[(0, 25), (3, 17), (5, 29)])
    plan = shortest_paths(g, 12)
    for u, v in zip(g.edges_u, g.edges_v):
        assert abs(plan.dist_to_goal[u] - plan.dist_to_goal[v]) <= 1
    assert plan.dist_to_goal[12] == 0


def test_invalid_goal_vertex():
    g = chain_graph(5)
    with pytest.raises(ValueError, match="out of range"):
        shortest_paths(g, 7)


def test_localize_global_single_vertex():
    g = chain_graph(1)
    v, sim = localize_global(g, np.zeros(3), TableModel([0.4]))
    assert v == 0


def test_localize_global_knn_median():
    # top-5 similarities at vertices 10,11,12,400,401 -> median time index 12
    table = np.zeros(500)
    for v, s in [(10, 0.99), (11, 0.98), (12, 0.97), (400, 0.96), (401, 0.95)]:
        table[v] = s
    g = chain_graph(500)
    v, sim = localize_global(g, np.zeros(3), TableModel(table))
    assert v == 12
    assert sim == 0.99


def test_localize_tie_broken_by_lower_index():
    table = np.zeros(10)
    table[[2, 3, 4, 5, 6, 7]] = 0.9  # six-way tie; k=5 takes 2..6, median 4
    g = chain_graph(10)
    v, _ = localize_global(g, np.zeros(3), TableModel(table))
    assert v == 4


def test_localize_unlocalized_falls_back_to_global():
    table = np.linspace(0, 1, 20)
    g = chain_graph(20)
    model = TableModel(table)
    got, state = localize(g, np.zeros(3), model, LocalizationState())
    want, _ = localize_global(g, np.zeros(3), model)
    assert got == want
    assert state.current_vertex == got


def test_localize_accepts_confident_local_result():
    table = np.zeros(200)
    table[50] = 0.9     # near previous vertex 52
    table[150] = 1.0    # better, but far outside the window
    g = chain_graph(200)
    model = TableModel(table)
    got, state = localize(g, np.zeros(3), model, LocalizationState(current_vertex=52),
                          NavParams(s_local=0.7, local_window=10))
    assert got == 50
    assert state.last_similarity == pytest.approx(0.9)


def test_localize_low_local_similarity_goes_global():
    table = np.zeros(200)
    table[50] = 0.5
    table[150] = 1.0
    g = chain_graph(200)
    model = TableModel(table)
    got, _ = localize(g, np.zeros(3), model, LocalizationState(current_vertex=52),
                      NavParams(s_local=0.7, local_window=10))
    want, _ = localize_global(g, np.zeros(3), model)
    assert got == want


def test_localize_window_extends_through_shortcuts():
    table = np.zeros(300)
    table[250] = 0.95   # reachable only through the shortcut extension
    g = chain_graph(300, shortcuts=[(55, 248)])
    model = TableModel(table)
    got, _ = localize(g, np.zeros(3), model, LocalizationState(current_vertex=52),
                      NavParams(s_local=0.7, local_window=10))
    assert got == 250


def test_localize_degenerates_to_global():
    # W_loc = 0 plus s_local = 1.0 must equal global localization exactly
    rng = np.random.default_rng(7)
    g = chain_graph(80)
    for trial in range(50):
        table = rng.random(80)
        model = TableModel(table)
        prev = int(rng.integers(80))
        got, _ = localize(g, np.zeros(3), model, LocalizationState(current_vertex=prev),
                          NavParams(s_local=1.0, local_window=0))
        want, _ = localize_global(g, np.zeros(3), model)
        assert got == want


def waypoint_fixture(sim_by_hops):
    """Chain graph where the path from vertex 0 to goal 8 is 0,1,...,8 and
    sim(query, vertex h) = sim_by_hops[h]."""
    table = np.zeros(9)
    for h, s in sim_by_hops.items():
        table[h] = s
    g = chain_graph(9)
    plan = shortest_paths(g, 8)
    return g, plan, TableModel(table)


def test_waypoint_takes_furthest_confident():
    sims = {1: .99, 2: .99, 3: .97, 4: .96, 5: .90, 6: .80, 7: .70}
    g, plan, model = waypoint_fixture(sims)
    v, s = select_waypoint(g, plan, 0, np.zeros(3), model,
                           NavParams(s_reach=0.95, h_min=1, h_max=7))
    assert v == 4
    assert s == pytest.approx(0.96)


def test_waypoint_fallback_to_h_min():
    sims = {h: 0.5 for h in range(1, 8)}
    g, plan, model = waypoint_fixture(sims)
    v, _ = select_waypoint(g, plan, 0, np.zeros(3), model,
                           NavParams(s_reach=0.95, h_min=1, h_max=7))
    assert v == 1


def test_waypoint_goal_when_path_shorter_than_h_min():
    g, plan, model = waypoint_fixture({})
    v, s = select_waypoint(g, plan, 8, np.zeros(3), model,
                           NavParams(s_reach=0.95, h_min=1, h_max=7))
    assert v == 8
    # one hop from goal with h_min=1: path positions [1] -> the goal itself
    v2, _ = select_waypoint(g, plan, 7, np.zeros(3), model,
                            NavParams(s_reach=0.95, h_min=1, h_max=7))
    assert v2 == 8


def test_waypoint_on_path_within_window():
    rng = np.random.default_rng(3)
    g = chain_graph(40, shortcuts=[(2, 30), (10, 38)])
    plan = shortest_paths(g, 39)
    for start in range(40):
        table = rng.random(40)
        model = TableModel(table)
        p = NavParams(s_reach=0.95, h_min=1, h_max=7)
        v, _ = select_waypoint(g, plan, start, np.zeros(3), model, p)
        d_start = plan.dist_to_goal[start]
        if d_start < p.h_min:
            assert v == 39
        else:
            path = path_from(plan, start)
            assert v in path
            hops = path.index(v)
            assert p.h_min <= hops <= p.h_max or v == 39
