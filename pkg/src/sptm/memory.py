"""The topological memory graph.

Vertices are subsampled observations from an exploration recording, each with
a precomputed embedding. Consecutive vertices share a temporal edge; pairs of
temporally distant vertices whose observation sequences look alike get an
undirected shortcut edge. Shortcut robustness comes from scoring a pair by
the median similarity over a window of aligned offsets rather than a single
comparison, and the similarity threshold is expressed as a target number of
shortcuts: the top K admissible pairs by windowed score become edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .recording import ExplorationRecording
from .nets import obs_batch_to_mat

TEMPORAL = 0
SHORTCUT = 1

# score matrix blocks are flushed through the similarity head at this many
# pairs at a time, keeping peak memory O(N * embed_dim)
_PAIR_BLOCK = 32_768


class GraphBuildError(ValueError):
    pass


@dataclass
class GraphParams:
    subsample: int = 4
    shortcut_count: int = 2000      # K: desired number of shortcut edges
    min_shortcut_gap: int = 5       # shortcut (i,j) requires |i-j| > this
    window: int = 10                # median taken over aligned offsets +-window

    def validate(self) -> None:
        if self.subsample < 1:
            raise GraphBuildError("subsample must be >= 1")
        if self.shortcut_count < 0:
            raise GraphBuildError("shortcut_count must be >= 0")
        if self.min_shortcut_gap < 1:
            raise GraphBuildError("min_shortcut_gap must be >= 1")
        if self.window < 0:
            raise GraphBuildError("window must be >= 0")


@dataclass
class MemoryGraph:
    observations: np.ndarray        # uint8 [N, 2, H, W, 3]
    embeddings: np.ndarray          # float64 [N, E]
    time_indices: np.ndarray        # int64 [N]: source index in the recording
    edges_u: np.ndarray             # int32 [M], u < v
    edges_v: np.ndarray
    edge_tags: np.ndarray           # uint8 [M]: TEMPORAL or SHORTCUT
    params: GraphParams
    maze_name: str = ""
    _adj: list | None = field(default=None, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return len(self.embeddings)

    @property
    def n_shortcuts(self) -> int:
        return int((self.edge_tags == SHORTCUT).sum())

    def neighbors(self, v: int) -> np.ndarray:
        return self.adjacency()[v]

    def adjacency(self) -> list[np.ndarray]:
        if self._adj is None:
            lists: list[list[int]] = [[] for _ in range(self.n_vertices)]
            for u, w in zip(self.edges_u, self.edges_v):
                lists[u].append(int(w))
                lists[w].append(int(u))
            self._adj = [np.array(sorted(l), dtype=np.int64) for l in lists]
        return self._adj

    def shortcut_pairs(self) -> list[tuple[int, int]]:
        m = self.edge_tags == SHORTCUT
        return list(zip(self.edges_u[m].tolist(), self.edges_v[m].tolist()))

    def observation(self, v: int) -> np.ndarray:
        return self.observations[v]


def window_median(values: np.ndarray) -> float:
    """Order statistic used for windowed scores: for n sorted values take
    index (n-1)//2, i.e. the lower middle element when n is even."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    return float(v[(len(v) - 1) // 2])


def shortcut_score(embeddings: np.ndarray, i: int, j: int, model, window: int = 10) -> float:
    """Windowed similarity of vertices i and j: the median of head
    similarities over aligned offsets t in [-window, window], dropping
    offsets that fall outside the vertex range (clipping, not padding)."""
    n = len(embeddings)
    lo = max(-window, -i, -j)
    hi = min(window, n - 1 - i, n - 1 - j)
    offs = np.arange(lo, hi + 1)
    sims = model.head_similarity(embeddings[i + offs], embeddings[j + offs])
    return window_median(sims)


def _windowed_scores_1d(diag: np.ndarray, window: int) -> np.ndarray:
    """Per-position windowed order statistic along one diagonal of the score
    matrix. diag[k] is the similarity of the pair at position k; the output
    at k is the (n-1)//2-th order statistic of diag[k-window : k+window+1]
    clipped to the array bounds. Matches shortcut_score exactly."""
    n = len(diag)
    if window == 0 or n == 1:
        return diag.copy()
    out = np.empty(n, dtype=np.float64)
    full = 2 * window + 1
    if n >= full:
        sw = np.lib.stride_tricks.sliding_window_view(diag, full)
        mid = (full - 1) // 2
        out[window:n - window] = np.partition(sw, mid, axis=1)[:, mid]
    for k in range(min(window, n)):
        out[k] = window_median(diag[:min(k + window + 1, n)])
    for k in range(max(n - window, window), n):
        out[k] = window_median(diag[max(k - window, 0):])
    return out


def build_graph(recording: ExplorationRecording, model, params: GraphParams | None = None,
                progress=None) -> MemoryGraph:
    """Construct the memory graph from a walkthrough recording.

    Subsamples the frame sequence, stacks each kept frame with its raw
    predecessor into an observation, embeds all vertices once, chains
    consecutive vertices with temporal edges, then adds the top-K windowed
    similarity pairs (with index gap > min_shortcut_gap) as shortcut edges.
    Ties at the cutoff are broken toward lexicographically smaller (i, j).
    """
    params = params or GraphParams()
    params.validate()
    frames = recording.frames
    if len(frames) == 0:
        raise GraphBuildError("empty recording")
    keep = np.arange(0, len(frames), params.subsample)
    n = len(keep)
    if n < 2:
        raise GraphBuildError(f"recording too short: {n} vertices after subsampling")

    prev_idx = np.maximum(keep - 1, 0)
    observations = np.stack([frames[prev_idx], frames[keep]], axis=1)

    feat = obs_batch_to_mat(observations)
    if hasattr(model, "obs_dim") and feat.shape[1] != model.obs_dim:
        raise GraphBuildError(f"recording frames ({feat.shape[1]} values/obs) do not "
                              f"match the model input ({model.obs_dim})")
    chunks = [model.embed(feat[lo:lo + 512]) for lo in range(0, n, 512)]
    embeddings = np.concatenate(chunks, axis=0)

    edges_u = [np.arange(n - 1, dtype=np.int32)]
    edges_v = [np.arange(1, n, dtype=np.int32)]
    tags = [np.zeros(n - 1, dtype=np.uint8)]

    if params.shortcut_count > 0:
        cand_i, cand_j, cand_s = _shortcut_candidates(embeddings, model, params, progress)
        # the chosen threshold is always strictly positive, so a zero-scored
        # pair can never become a shortcut however small K's competition is
        positive = cand_s > 0.0
        cand_i, cand_j, cand_s = cand_i[positive], cand_j[positive], cand_s[positive]
        if len(cand_s) > 0:
            order = np.lexsort((cand_j, cand_i, -cand_s))
            top = order[: params.shortcut_count]
            edges_u.append(cand_i[top].astype(np.int32))
            edges_v.append(cand_j[top].astype(np.int32))
            tags.append(np.full(len(top), SHORTCUT, dtype=np.uint8))

    return MemoryGraph(
        observations=observations,
        embeddings=embeddings,
        time_indices=keep.astype(np.int64),
        edges_u=np.concatenate(edges_u),
        edges_v=np.concatenate(edges_v),
        edge_tags=np.concatenate(tags),
        params=params,
        maze_name=recording.maze_name,
    )


def _shortcut_candidates(embeddings: np.ndarray, model, params: GraphParams, progress=None):
    """Windowed scores of all admissible pairs, evaluated diagonal by
    diagonal: every pair on diagonal d = j - i only ever needs similarities
    of other pairs on the same diagonal, so per-diagonal vectors are enough
    and the full N x N score matrix is never materialized."""
    n = len(embeddings)
    w = params.window
    out_i: list[np.ndarray] = []
    out_j: list[np.ndarray] = []
    out_s: list[np.ndarray] = []

    pend: list[tuple[int, int]] = []   # (diagonal, length), in flush order
    pend_rows = 0

    def flush():
        nonlocal pend, pend_rows
        if not pend:
            return
        i_parts = [np.arange(0, n - d) for d, _ in pend]
        j_parts = [np.arange(d, n) for d, _ in pend]
        e1 = embeddings[np.concatenate(i_parts)]
        e2 = embeddings[np.concatenate(j_parts)]
        sims = model.head_similarity(e1, e2)
        pos = 0
        for d, length in pend:
            diag = sims[pos:pos + length]
            pos += length
            scored = _windowed_scores_1d(diag, w)
            out_i.append(np.arange(0, n - d))
            out_j.append(np.arange(d, n))
            out_s.append(scored)
        pend = []
        pend_rows = 0

    for d in range(params.min_shortcut_gap + 1, n):
        length = n - d
        pend.append((d, length))
        pend_rows += length
        if pend_rows >= _PAIR_BLOCK:
            flush()
            if progress is not None:
                progress(d, n)
    flush()

    if not out_s:
        empty = np.array([], dtype=np.int64)
        return empty, empty, np.array([], dtype=np.float64)
    return (np.concatenate(out_i), np.concatenate(out_j), np.concatenate(out_s))
