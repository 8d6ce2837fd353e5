"""Local HTTP + WebSocket service for the browser frontend.

Sessions wrap simulator state: explore sessions record (frame, action) pairs
a human produces with the keyboard; navigate sessions run the planning agent
and stream its internals (localized vertex, waypoint, path) step by step;
replay sessions page through a saved recording. All per-session operations
are serialized through one lock, so concurrent requests cannot interleave
mid-step.
"""

from __future__ import annotations

import asyncio
import base64
import io as _bio
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
    from fastapi.responses import FileResponse, JSONResponse
    from fastapi.staticfiles import StaticFiles
except ImportError as e:  # pragma: no cover
    raise ImportError("the service needs fastapi; pip install fastapi uvicorn") from e

from . import config as cfgmod
from . import io as sio
from . import mazes
from .evaluate import goal_observation
from .memory import SHORTCUT, MemoryGraph
from .nav import (
    LocalizationState,
    NavParams,
    localize,
    localize_global,
    path_from,
    select_waypoint,
    shortest_paths,
)
from .nets import obs_to_vec
from .recording import ExplorationRecording
from .seeding import rng_for
from .sim import Action, AgentState, SimParams, render, spawn_state, step


def _png_b64(frame: np.ndarray) -> str:
    from PIL import Image

    buf = _bio.BytesIO()
    Image.fromarray(frame, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


@dataclass
class Session:
    id: str
    mode: str                        # explore | navigate | replay
    maze_name: str
    maze: mazes.MazeSpec
    state: AgentState
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)
    frames: list[np.ndarray] = field(default_factory=list)     # explore recording
    actions: list[int] = field(default_factory=list)
    poses: list[tuple[float, float, float]] = field(default_factory=list)
    replay: ExplorationRecording | None = None
    replay_cursor: int = 0
    subscribers: list = field(default_factory=list)             # live websockets
    nav_task: asyncio.Task | None = None
    step_index: int = 0


class ServiceState:
    """Shared immutable artifacts plus the live session table."""

    def __init__(self, cfg: cfgmod.Config):
        self.cfg = cfg
        self.sim_params: SimParams = cfg.sim_params()
        self.nav_params: NavParams = cfg.nav_params()
        self.sessions: dict[str, Session] = {}
        self._ids = itertools.count(1)
        self._graphs: dict[str, MemoryGraph] = {}
        self._recordings: dict[str, ExplorationRecording] = {}
        self._model = None
        self._policy = None

    def data(self, *parts: str) -> Path:
        p = Path(self.cfg.data_dir()).joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def new_session(self, maze_name: str, mode: str) -> Session:
        tex_seed = int(rng_for(self.cfg.run.seed, "maze-textures", maze_name).integers(2**31))
        maze = mazes.make_maze(mazes.load_layout(maze_name), tex_seed, name=maze_name)
        sid = f"s{next(self._ids)}"
        st = spawn_state(maze, 0, heading_octant=0)
        sess = Session(id=sid, mode=mode, maze_name=maze_name, maze=maze, state=st)
        if mode == "explore":
            frame = render(st, maze, self.sim_params)
            sess.frames.append(frame)
            sess.poses.append((st.x, st.y, st.heading))
        self.sessions[sid] = sess
        return sess

    def graph_for(self, maze_name: str) -> MemoryGraph:
        if maze_name not in self._graphs:
            path = self.data("graphs", f"{maze_name}.graph")
            if not path.exists():
                raise HTTPException(404, f"no graph for maze {maze_name!r}; build one first")
            self._graphs[maze_name] = sio.load_graph(path)
        return self._graphs[maze_name]

    def recording_for(self, maze_name: str) -> ExplorationRecording:
        if maze_name not in self._recordings:
            path = self.data("recordings", f"{maze_name}.rec")
            if not path.exists():
                raise HTTPException(404, f"no recording for maze {maze_name!r}")
            self._recordings[maze_name] = sio.load_recording(path)
        return self._recordings[maze_name]

    @property
    def model(self):
        if self._model is None:
            path = self.data("models", "r.weights")
            if not path.exists():
                raise HTTPException(404, "similarity weights missing; run `sptm train-r`")
            self._model = sio.load_weights(path)
        return self._model

    @property
    def policy(self):
        if self._policy is None:
            path = self.data("models", "l.weights")
            if not path.exists():
                raise HTTPException(404, "locomotion weights missing; run `sptm train-l`")
            self._policy = sio.load_weights(path)
        return self._policy


def maze_geometry(maze: mazes.MazeSpec) -> dict:
    return {
        "rows": maze.rows,
        "cols": maze.cols,
        "cell_size": maze.cell_size,
        "walls": [[int(c) for c in row] for row in maze.wall.astype(int)],
        "goals": [{"id": i, "col": c, "row": r} for i, (c, r) in enumerate(maze.goal_cells)],
        "spawns": [{"col": c, "row": r} for c, r in maze.spawn_cells],
    }


def _pose_dict(st: AgentState) -> dict:
    return {"x": st.x, "y": st.y, "heading": st.heading, "step": st.step_count}


async def _broadcast(sess: Session, message: dict) -> None:
    dead = []
    for ws in sess.subscribers:
        try:
            await ws.send_text(json.dumps(message))
        except Exception:
            dead.append(ws)
    for ws in dead:
        sess.subscribers.remove(ws)


def create_app(state: ServiceState, frontend_dir: str | None = None) -> "FastAPI":
    app = FastAPI(title="sptm service")

    def get_session(sid: str) -> Session:
        sess = state.sessions.get(sid)
        if sess is None:
            raise HTTPException(404, f"unknown session {sid!r}")
        return sess

    @app.post("/api/session")
    async def create_session(body: dict):
        maze_name = body.get("maze")
        mode = body.get("mode", "explore")
        if mode not in ("explore", "navigate", "replay"):
            raise HTTPException(400, f"bad mode {mode!r}")
        try:
            sess = state.new_session(maze_name, mode)
        except mazes.MazeError as e:
            raise HTTPException(400, str(e)) from None
        if mode == "replay":
            sess.replay = state.recording_for(maze_name)
        return {"session": sess.id, "mode": mode,
                "geometry": maze_geometry(sess.maze),
                "pose": _pose_dict(sess.state)}

    @app.post("/api/session/{sid}/action")
    async def do_action(sid: str, body: dict):
        sess = get_session(sid)
        name = body.get("action")
        try:
            action = Action[name] if isinstance(name, str) else Action(int(name))
        except (KeyError, ValueError):
            raise HTTPException(400, f"bad action {name!r}") from None
        async with sess.lock:
            if sess.mode == "navigate":
                raise HTTPException(409, "navigate sessions are driven by the agent")
            if sess.mode == "replay":
                rec = sess.replay
                sess.replay_cursor = min(sess.replay_cursor + 1, len(rec.frames) - 1)
                frame = rec.frames[sess.replay_cursor]
                pose = rec.poses[sess.replay_cursor] if rec.poses is not None else None
                msg = {"type": "step", "frame_png": _png_b64(frame),
                       "step": sess.replay_cursor,
                       "pose": {"x": pose[0], "y": pose[1], "heading": pose[2],
                                "step": sess.replay_cursor} if pose is not None else None}
                await _broadcast(sess, msg)
                return {"pose": msg["pose"], "step": sess.replay_cursor}
            sess.state = step(sess.state, sess.maze, action, state.sim_params)
            sess.step_index += 1
            frame = render(sess.state, sess.maze, state.sim_params)
            if sess.mode == "explore":
                sess.frames.append(frame)
                sess.actions.append(int(action))
                sess.poses.append((sess.state.x, sess.state.y, sess.state.heading))
            await _broadcast(sess, {"type": "step", "frame_png": _png_b64(frame),
                                    "pose": _pose_dict(sess.state), "step": sess.step_index,
                                    "recorded": len(sess.actions)})
            return {"pose": _pose_dict(sess.state), "step": sess.step_index,
                    "recorded": len(sess.actions)}

    @app.post("/api/session/{sid}/save")
    async def save(sid: str, body: dict):
        sess = get_session(sid)
        if sess.mode != "explore":
            raise HTTPException(409, "only explore sessions record")
        name = body.get("path") or f"{sess.maze_name}.rec"
        out = state.data("recordings", Path(name).name)  # confined to the data dir
        async with sess.lock:
            rec = ExplorationRecording(
                frames=np.stack(sess.frames),
                actions=np.array(sess.actions, dtype=np.int8),
                poses=np.array(sess.poses, dtype=np.float64),
                maze_name=sess.maze_name,
            )
            sio.save_recording(rec, out)
        return {"saved": str(out), "frames": len(rec.frames), "actions": int(rec.duration)}

    @app.post("/api/session/{sid}/navigate")
    async def start_navigate(sid: str, body: dict):
        sess = get_session(sid)
        if sess.mode != "navigate":
            raise HTTPException(409, "session is not in navigate mode")
        goal_id = int(body.get("goal_id", 0))
        if not 0 <= goal_id < 4:
            raise HTTPException(400, "goal_id must be 0..3")
        if sess.nav_task is not None and not sess.nav_task.done():
            raise HTTPException(409, "an episode is already running")
        graph = state.graph_for(sess.maze_name)
        model = state.model
        policy = state.policy
        budget = int(body.get("budget", state.cfg.eval.budget))
        sess.nav_task = asyncio.create_task(
            _run_navigation(state, sess, graph, model, policy, goal_id, budget))
        return {"started": True, "goal_id": goal_id, "budget": budget}

    @app.websocket("/api/session/{sid}/stream")
    async def stream(ws: WebSocket, sid: str):
        sess = state.sessions.get(sid)
        if sess is None:
            await ws.close(code=4404)
            return
        await ws.accept()
        sess.subscribers.append(ws)
        # current view so a late joiner has something on screen
        frame = (sess.frames[-1] if sess.frames
                 else render(sess.state, sess.maze, state.sim_params))
        await ws.send_text(json.dumps({"type": "hello", "frame_png": _png_b64(frame),
                                       "pose": _pose_dict(sess.state),
                                       "mode": sess.mode}))
        try:
            while True:
                await ws.receive_text()   # keepalive / ignored
        except WebSocketDisconnect:
            pass
        finally:
            if ws in sess.subscribers:
                sess.subscribers.remove(ws)

    @app.get("/api/maze/{maze_name}/graph")
    async def graph_overlay(maze_name: str):
        graph = state.graph_for(maze_name)
        rec = state.recording_for(maze_name)
        if rec.poses is None:
            raise HTTPException(409, "recording has no poses; overlay unavailable")
        pos = rec.poses[graph.time_indices]
        return {
            "vertices": [{"v": int(i), "x": float(x), "y": float(y)}
                         for i, (x, y, _) in enumerate(pos)],
            "edges": [{"u": int(u), "v": int(v),
                       "kind": "shortcut" if t == SHORTCUT else "temporal"}
                      for u, v, t in zip(graph.edges_u.tolist(), graph.edges_v.tolist(),
                                         graph.edge_tags.tolist())],
        }

    @app.get("/api/mazes")
    async def list_mazes():
        return {"mazes": mazes.list_layouts()}

    if frontend_dir and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="frontend")
    else:
        @app.get("/")
        async def root():
            return JSONResponse({"service": "sptm", "frontend": "not built",
                                 "endpoints": ["/api/session", "/api/mazes"]})

    return app


async def _run_navigation(state: ServiceState, sess: Session, graph, model, policy,
                          goal_id: int, budget: int) -> None:
    """Episode loop mirroring the batch runner, pushing every step over WS."""
    maze = sess.maze
    params = state.nav_params
    sim_params = state.sim_params
    goal_obs = goal_observation(maze, goal_id, sim_params)
    v_goal, _ = localize_global(graph, obs_to_vec(goal_obs), model, k=params.k_neighbors)
    plan = shortest_paths(graph, v_goal)
    rng = np.random.default_rng(rng_for(state.cfg.run.seed, "ui-nav", sess.id).integers(2**31))
    gx, gy = maze.goal_position(goal_id)
    radius = state.cfg.eval.success_radius * maze.cell_size

    st = sess.state
    frame = render(st, maze, sim_params)
    prev = frame
    loc = LocalizationState()
    success = False
    steps = 0
    for t in range(budget):
        async with sess.lock:
            obs_vec = obs_to_vec(np.stack([prev, frame]))
            obs_emb = model.embed(np.atleast_2d(obs_vec))
            v_agent, loc = localize(graph, obs_vec, model, loc, params, obs_emb=obs_emb)
            v_way, _ = select_waypoint(graph, plan, v_agent, obs_vec, model, params,
                                       obs_emb=obs_emb)
            probs = policy.action_probs(obs_vec, obs_to_vec(graph.observation(v_way)))
            action = int(rng.choice(len(probs), p=probs))
            st = step(st, maze, action, sim_params)
            sess.state = st
            sess.step_index += 1
            prev = frame
            frame = render(st, maze, sim_params)
            steps = t + 1
            sp = path_from(plan, v_agent, max_len=graph.n_vertices)
            await _broadcast(sess, {
                "type": "step", "frame_png": _png_b64(frame), "pose": _pose_dict(st),
                "step": sess.step_index, "nav": {
                    "vertex": int(v_agent), "waypoint": int(v_way),
                    "goal_vertex": int(v_goal),
                    "remaining_hops": int(plan.dist_to_goal[v_agent]),
                    "path": [int(v) for v in sp],
                    "action": int(action),
                }})
        if (st.x - gx) ** 2 + (st.y - gy) ** 2 < radius ** 2:
            success = True
            break
        await asyncio.sleep(0)
    await _broadcast(sess, {"type": "episode_end", "success": success, "steps": steps,
                            "goal_id": goal_id})


def run_server(cfg: cfgmod.Config, host: str = "127.0.0.1", port: int = 8741) -> None:
    import uvicorn

    frontend = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    app = create_app(ServiceState(cfg), frontend_dir=str(frontend))
    uvicorn.run(app, host=host, port=port, log_level="info")
