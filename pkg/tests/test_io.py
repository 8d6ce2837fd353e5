import numpy as np
import pytest

from sptm import io as sio
from sptm.memory import GraphParams, build_graph
from sptm.nets import LocomotionPolicy, SimilarityModel
from sptm.recording import ExplorationRecording
from tests.test_memory import StubModel, make_recording


def sample_recording(with_poses=True):
    rng = np.random.default_rng(0)
    frames = rng.integers(0, 256, size=(31, 6, 8, 3), dtype=np.uint8)
    poses = rng.random((31, 3)) if with_poses else None
    return ExplorationRecording(frames=frames,
                                actions=rng.integers(0, 7, size=30).astype(np.int8),
                                poses=poses, maze_name="tiny")


def test_recording_round_trip(tmp_path):
    rec = sample_recording()
    p = tmp_path / "walk.rec"
    sio.save_recording(rec, p)
    back = sio.load_recording(p)
    assert (back.frames == rec.frames).all()
    assert (back.actions == rec.actions).all()
    assert np.allclose(back.poses, rec.poses)
    assert back.maze_name == "tiny"


def test_recording_without_poses(tmp_path):
    rec = sample_recording(with_poses=False)
    p = tmp_path / "walk.rec"
    sio.save_recording(rec, p)
    assert sio.load_recording(p).poses is None


def test_truncated_recording_rejected(tmp_path):
    rec = sample_recording()
    p = tmp_path / "walk.rec"
    sio.save_recording(rec, p)
    data = p.read_bytes()
    p.write_bytes(data[: len(data) // 2])
    with pytest.raises(sio.FormatError, match="truncated"):
        sio.load_recording(p)


def test_wrong_magic_rejected(tmp_path):
    p = tmp_path / "bad"
    p.write_bytes(b"NOPE!!" + b"\x00" * 40)
    with pytest.raises(sio.FormatError, match="not a"):
        sio.load_recording(p)


def test_graph_round_trip(tmp_path):
    rec = make_recording(61, seed=9)
    model = StubModel(lambda a, b: float(((a + 2 * b) * 11) % 1.0))
    params = GraphParams(subsample=2, shortcut_count=12, min_shortcut_gap=3, window=4)
    g = build_graph(rec, model, params)
    p = tmp_path / "g.graph"
    sio.save_graph(g, p)
    back = sio.load_graph(p)
    assert back.n_vertices == g.n_vertices
    assert (back.observations == g.observations).all()
    assert (back.embeddings == g.embeddings).all()
    assert (back.time_indices == g.time_indices).all()
    assert (back.edges_u == g.edges_u).all()
    assert (back.edges_v == g.edges_v).all()
    assert (back.edge_tags == g.edge_tags).all()
    assert back.params == params


def test_graph_self_describing_embed_dim(tmp_path):
    # a graph built with one embedding size loads fine regardless of what any
    # current model would produce; the dimension is recorded in the file
    rec = make_recording(31, seed=1)
    g = build_graph(rec, StubModel(lambda a, b: 0.4), GraphParams(subsample=2, shortcut_count=3))
    p = tmp_path / "g.graph"
    sio.save_graph(g, p)
    back = sio.load_graph(p)
    assert back.embeddings.shape[1] == g.embeddings.shape[1]


def test_weights_round_trip_similarity(tmp_path):
    m = SimilarityModel(frame_width=4, frame_height=3, embed_dim=4,
                        enc_hidden=8, head_hidden=6, head_layers=2, seed=5,
                        patch=1, patch_units=2)
    p = tmp_path / "r.weights"
    sio.save_weights(m, p)
    back = sio.load_weights(p)
    assert isinstance(back, SimilarityModel)
    for k in m.params:
        assert (back.params[k] == m.params[k]).all()
    rng = np.random.default_rng(1)
    x = rng.random((3, m.obs_dim))
    assert (back.similarity(x, x) == m.similarity(x, x)).all()


def test_weights_round_trip_policy(tmp_path):
    pol = LocomotionPolicy(frame_width=4, frame_height=3, hidden=(8, 6), seed=6,
                           patch=1, patch_units=2)
    p = tmp_path / "l.weights"
    sio.save_weights(pol, p)
    back = sio.load_weights(p)
    assert isinstance(back, LocomotionPolicy)
    rng = np.random.default_rng(2)
    x, g = rng.random(pol.obs_dim), rng.random(pol.obs_dim)
    assert (back.action_probs(x, g) == pol.action_probs(x, g)).all()


def test_truncated_weights_rejected(tmp_path):
    m = SimilarityModel(frame_width=4, frame_height=3, embed_dim=4,
                        enc_hidden=8, head_hidden=6, head_layers=2,
                        patch=1, patch_units=2)
    p = tmp_path / "r.weights"
    sio.save_weights(m, p)
    data = p.read_bytes()
    p.write_bytes(data[:-100])
    with pytest.raises(sio.FormatError, match="truncated"):
        sio.load_weights(p)
