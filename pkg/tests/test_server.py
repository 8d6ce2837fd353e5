import base64
import json

import numpy as np
import pytest

pytest.importorskip("fastapi")
from fastapi.testclient import TestClient

from sptm import config as cfgmod
from sptm import io as sio
from sptm.memory import GraphParams, build_graph
from sptm.server import ServiceState, create_app


@pytest.fixture()
def client(tmp_path):
    cfg = cfgmod.load(overrides=["run.data_dir=" + str(tmp_path)])
    state = ServiceState(cfg)
    return TestClient(create_app(state)), cfg, tmp_path


def test_create_session_returns_geometry(client):
    c, _, _ = client
    r = c.post("/api/session", json={"maze": "val-1", "mode": "explore"})
    assert r.status_code == 200
    body = r.json()
    assert body["mode"] == "explore"
    geo = body["geometry"]
    assert geo["rows"] == 15 and geo["cols"] == 15
    assert len(geo["goals"]) == 4
    assert body["pose"]["step"] == 0


def test_unknown_session_404(client):
    c, _, _ = client
    r = c.post("/api/session/nope/action", json={"action": "MOVE_FORWARD"})
    assert r.status_code == 404


def test_action_appends_to_recording_and_save(client):
    c, _, tmp = client
    sid = c.post("/api/session", json={"maze": "val-2", "mode": "explore"}).json()["session"]
    for name in ["MOVE_FORWARD", "TURN_LEFT", "MOVE_FORWARD"]:
        r = c.post(f"/api/session/{sid}/action", json={"action": name})
        assert r.status_code == 200
    assert r.json()["recorded"] == 3
    r = c.post(f"/api/session/{sid}/save", json={"path": "ui-walk.rec"})
    assert r.status_code == 200
    saved = r.json()
    assert saved["frames"] == 4 and saved["actions"] == 3
    rec = sio.load_recording(saved["saved"])
    assert rec.duration == 3
    assert rec.poses is not None


def test_saved_recording_builds_graph_end_to_end(client):
    c, cfg, tmp = client
    sid = c.post("/api/session", json={"maze": "val-3", "mode": "explore"}).json()["session"]
    rng = np.random.default_rng(0)
    names = [a for a in ["MOVE_FORWARD", "MOVE_BACKWARD", "TURN_LEFT", "TURN_RIGHT"]]
    for i in range(60):
        c.post(f"/api/session/{sid}/action", json={"action": names[int(rng.integers(4))]})
    saved = c.post(f"/api/session/{sid}/save", json={}).json()
    rec = sio.load_recording(saved["saved"])
    from tests.test_memory import StubModel
    g = build_graph(rec, StubModel(lambda a, b: float((a * b * 97) % 1.0)),
                    GraphParams(subsample=4, shortcut_count=10, min_shortcut_gap=2, window=1))
    assert g.n_vertices == 16  # 61 frames / 4


def test_bad_action_and_bad_mode(client):
    c, _, _ = client
    assert c.post("/api/session", json={"maze": "val-1", "mode": "wat"}).status_code == 400
    sid = c.post("/api/session", json={"maze": "val-1", "mode": "explore"}).json()["session"]
    assert c.post(f"/api/session/{sid}/action", json={"action": "FLY"}).status_code == 400


def test_stream_pushes_frames_per_step(client):
    c, _, _ = client
    sid = c.post("/api/session", json={"maze": "val-1", "mode": "explore"}).json()["session"]
    with c.websocket_connect(f"/api/session/{sid}/stream") as ws:
        hello = json.loads(ws.receive_text())
        assert hello["type"] == "hello"
        png = base64.b64decode(hello["frame_png"])
        assert png[:8] == b"\x89PNG\r\n\x1a\n"
        n = 5
        for _ in range(n):
            c.post(f"/api/session/{sid}/action", json={"action": "TURN_RIGHT"})
        got = [json.loads(ws.receive_text()) for _ in range(n)]
        assert all(m["type"] == "step" for m in got)
        assert [m["step"] for m in got] == list(range(1, n + 1))


def test_navigate_requires_artifacts(client):
    c, _, _ = client
    sid = c.post("/api/session", json={"maze": "val-1", "mode": "navigate"}).json()["session"]
    r = c.post(f"/api/session/{sid}/navigate", json={"goal_id": 1})
    assert r.status_code == 404  # no graph built yet
    r = c.post(f"/api/session/{sid}/action", json={"action": "MOVE_FORWARD"})
    assert r.status_code == 409  # navigate sessions not manually driven


def test_graph_overlay_endpoint(client, tmp_path):
    c, cfg, tmp = client
    # manufacture a tiny recording + graph on disk
    from sptm import mazes
    from sptm.baselines import auto_explore
    maze = mazes.builtin_maze("val-1", 3)
    rec = auto_explore(maze, steps=80, seed=1)
    (tmp / "recordings").mkdir(exist_ok=True)
    sio.save_recording(rec, tmp / "recordings" / "val-1.rec")
    from tests.test_memory import StubModel
    g = build_graph(rec, StubModel(lambda a, b: float((a + b) % 1.0)),
                    GraphParams(subsample=4, shortcut_count=6, min_shortcut_gap=2, window=1))
    (tmp / "graphs").mkdir(exist_ok=True)
    sio.save_graph(g, tmp / "graphs" / "val-1.graph")
    r = c.get("/api/maze/val-1/graph")
    assert r.status_code == 200
    body = r.json()
    assert len(body["vertices"]) == g.n_vertices
    kinds = {e["kind"] for e in body["edges"]}
    assert "temporal" in kinds
    assert len(body["edges"]) == len(g.edges_u)


def test_maze_list(client):
    c, _, _ = client
    names = c.get("/api/mazes").json()["mazes"]
    assert "train" in names and "test-7" in names
