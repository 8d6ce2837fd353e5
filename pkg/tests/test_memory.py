import numpy as np
import pytest

from sptm.memory import (
    SHORTCUT,
    TEMPORAL,
    GraphBuildError,
    GraphParams,
    MemoryGraph,
    build_graph,
    shortcut_score,
    window_median,
    _windowed_scores_1d,
)
from sptm.recording import ExplorationRecording


class StubModel:
    """Similarity stand-in: embeds an observation as its mean pixel value and
    scores a pair with a user-supplied function of the two embeddings."""

    def __init__(self, fn):
        self.fn = fn

    def embed(self, x):
        x = np.atleast_2d(x)
        return x.mean(axis=1, keepdims=True)

    def head_similarity(self, e1, e2):
        e1, e2 = np.atleast_2d(e1), np.atleast_2d(e2)
        return np.array([self.fn(a[0], b[0]) for a, b in zip(e1, e2)], dtype=np.float64)


def make_recording(n_frames, seed=0, value_fn=None):
    rng = np.random.default_rng(seed)
    if value_fn is None:
        frames = rng.integers(0, 256, size=(n_frames, 3, 4, 3), dtype=np.uint8)
    else:
        frames = np.stack([np.full((3, 4, 3), value_fn(t), dtype=np.uint8)
                           for t in range(n_frames)])
    return ExplorationRecording(frames=frames,
                                actions=rng.integers(0, 7, size=n_frames - 1).astype(np.int8),
                                poses=None)


def test_zero_similarity_yields_only_temporal_chain():
    rec = make_recording(41, value_fn=lambda t: (t * 6) % 251)
    model = StubModel(lambda a, b: 0.0 if a != b else 1.0)
    g = build_graph(rec, model, GraphParams(subsample=4, shortcut_count=100,
                                            min_shortcut_gap=5, window=0))
    assert g.n_vertices == 11
    assert (g.edge_tags == TEMPORAL).sum() == 10
    assert g.n_shortcuts == 0


def test_revisit_creates_shortcut():
    # frame value walks away and comes back, flat at both ends so the stacked
    # observations at vertices 0 and 50 (frames 0 and 200) are identical
    rec = make_recording(201, value_fn=lambda t: max(0, min(t - 1, 199 - t)))
    model = StubModel(lambda a, b: 1.0 if abs(a - b) < 1e-9 else 0.0)
    g = build_graph(rec, model, GraphParams(subsample=4, shortcut_count=4000,
                                            min_shortcut_gap=5, window=0))
    assert (0, 50) in g.shortcut_pairs()  # vertices 0 and 50 = frames 0 and 200


def test_more_requested_than_admissible_takes_all():
    rec = make_recording(17)
    model = StubModel(lambda a, b: 0.9)
    params = GraphParams(subsample=4, shortcut_count=10_000, min_shortcut_gap=1, window=0)
    g = build_graph(rec, model, params)
    n = g.n_vertices
    admissible = sum(n - d for d in range(2, n))
    assert g.n_shortcuts == admissible


def test_temporal_chain_always_complete():
    rec = make_recording(37, seed=3)
    model = StubModel(lambda a, b: float((a * b) % 1.0))
    g = build_graph(rec, model, GraphParams(subsample=2, shortcut_count=5,
                                            min_shortcut_gap=3, window=2))
    chain = {(u, v) for u, v, t in zip(g.edges_u, g.edges_v, g.edge_tags) if t == TEMPORAL}
    assert chain == {(i, i + 1) for i in range(g.n_vertices - 1)}


def test_shortcut_gap_respected():
    rec = make_recording(61, seed=4)
    model = StubModel(lambda a, b: float(((a + b) * 7) % 1.0))
    gap = 5
    g = build_graph(rec, model, GraphParams(subsample=1, shortcut_count=30,
                                            min_shortcut_gap=gap, window=3))
    for i, j in g.shortcut_pairs():
        assert abs(i - j) > gap


def test_build_deterministic():
    rec = make_recording(101, seed=5)
    model = StubModel(lambda a, b: float(((a * 3 + b) * 13) % 1.0))
    params = GraphParams(subsample=2, shortcut_count=40, min_shortcut_gap=4, window=5)
    a = build_graph(rec, model, params)
    b = build_graph(rec, model, params)
    assert (a.edges_u == b.edges_u).all() and (a.edges_v == b.edges_v).all()
    assert (a.edge_tags == b.edge_tags).all()
    assert (a.embeddings == b.embeddings).all()


def test_empty_and_tiny_recordings_rejected():
    model = StubModel(lambda a, b: 0.5)
    with pytest.raises(GraphBuildError, match="too short"):
        build_graph(make_recording(3), model, GraphParams(subsample=4))


def test_constant_model_scores_constant():
    rng = np.random.default_rng(0)
    emb = rng.random((50, 1))
    model = StubModel(lambda a, b: 0.7)
    assert shortcut_score(emb, 10, 30, model, window=10) == 0.7


def test_median_is_11th_of_21_known_values():
    rng = np.random.default_rng(1)
    values = rng.random(21)

    class SeqModel:
        def __init__(self):
            self.i = 0
        def head_similarity(self, e1, e2):
            out = values[self.i: self.i + len(np.atleast_2d(e1))]
            self.i += len(out)
            return out

    emb = np.zeros((100, 1))
    got = shortcut_score(emb, 40, 60, SeqModel(), window=10)
    assert got == sorted(values)[10]


def test_left_clipped_window_uses_in_range_offsets():
    # i = 0: offsets -10..-1 invalid, so the median runs over 11 values
    calls = []

    class CountModel:
        def head_similarity(self, e1, e2):
            n = len(np.atleast_2d(e1))
            calls.append(n)
            return np.linspace(0.1, 0.9, n)

    emb = np.zeros((100, 1))
    got = shortcut_score(emb, 0, 50, CountModel(), window=10)
    assert calls == [11]
    assert got == sorted(np.linspace(0.1, 0.9, 11))[5]


def test_windowed_scores_match_direct_oracle():
    # the vectorized per-diagonal path must equal sort-and-index exactly,
    # including clipped boundaries and even-length windows
    rng = np.random.default_rng(2)
    for trial in range(40):
        n = int(rng.integers(1, 60))
        w = int(rng.integers(0, 14))
        diag = rng.random(n)
        fast = _windowed_scores_1d(diag, w)
        for k in range(n):
            window = diag[max(0, k - w): min(n, k + w + 1)]
            assert fast[k] == window_median(window), (n, w, k)


def test_even_length_median_takes_lower_middle():
    assert window_median([0.4, 0.1, 0.9, 0.6]) == 0.4  # sorted: .1 .4 .6 .9 -> idx 1
    assert window_median([0.5]) == 0.5
    assert window_median([0.2, 0.8]) == 0.2
