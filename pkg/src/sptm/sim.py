"""First-person maze simulator: discrete actions over a continuous pose,
with wall sliding, action repeat, and a column raycast renderer.

Dynamics and rendering are pure functions of (maze, state, params);
identical inputs give bit-identical frames, which the training pipeline
relies on to batch-render recorded pose sequences after the fact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

from .mazes import PALETTES, TEXTURE_TILE, MazeSpec


class Action(IntEnum):
    DO_NOTHING = 0
    MOVE_FORWARD = 1
    MOVE_BACKWARD = 2
    MOVE_LEFT = 3
    MOVE_RIGHT = 4
    TURN_LEFT = 5
    TURN_RIGHT = 6


N_ACTIONS = 7
MOTION_ACTIONS = (
    Action.MOVE_FORWARD,
    Action.MOVE_BACKWARD,
    Action.MOVE_LEFT,
    Action.MOVE_RIGHT,
    Action.TURN_LEFT,
    Action.TURN_RIGHT,
)

TWO_PI = 2.0 * math.pi
_EPS = 1e-9


@dataclass(frozen=True)
class SimParams:
    """Motion and rendering knobs. Speeds are per primitive step; every
    logical action applies the primitive `action_repeat` times."""

    move_speed: float = 0.25        # cells per primitive move
    turn_step: float = math.radians(11.25)  # radians per primitive turn
    action_repeat: int = 4
    agent_radius: float = 0.2       # cells; square footprint half-extent
    frame_width: int = 32
    frame_height: int = 24
    fov: float = math.radians(110.0)
    shade_alpha: float = 0.15       # brightness = 1 / (1 + alpha * distance)
    side_shade: float = 0.8         # extra factor on north/south faces
    ceiling_rgb: tuple[int, int, int] = (158, 171, 188)
    floor_rgb: tuple[int, int, int] = (62, 56, 52)


DEFAULT_PARAMS = SimParams()


@dataclass(frozen=True)
class AgentState:
    x: float
    y: float
    heading: float  # radians in [0, 2pi); 0 looks along +x, +turn is clockwise on screen
    step_count: int = 0


def spawn_state(maze: MazeSpec, spawn_id: int = 0, heading_octant: int = 0) -> AgentState:
    x, y = maze.spawn_position(spawn_id % len(maze.spawn_cells))
    return AgentState(x=x, y=y, heading=(heading_octant % 8) * (math.pi / 4.0), step_count=0)


def _collides(maze: MazeSpec, x: float, y: float, r: float) -> bool:
    c0 = int((x - r) / maze.cell_size)
    c1 = int((x + r) / maze.cell_size)
    r0 = int((y - r) / maze.cell_size)
    r1 = int((y + r) / maze.cell_size)
    wall = maze.wall
    rows, cols = wall.shape
    for rr in range(max(r0, 0), min(r1, rows - 1) + 1):
        for cc in range(max(c0, 0), min(c1, cols - 1) + 1):
            if wall[rr, cc]:
                return True
    return False


def _slide(maze: MazeSpec, x: float, y: float, dx: float, dy: float, r: float) -> tuple[float, float]:
    """Axis-separated move with clamping: a blocked axis is pulled back to the
    wall face, the other axis keeps its displacement (sliding along walls)."""
    cs = maze.cell_size
    nx = x + dx
    if dx > 0:
        if _collides(maze, nx, y, r):
            nx = (math.floor((nx + r) / cs)) * cs - r - _EPS
    elif dx < 0:
        if _collides(maze, nx, y, r):
            nx = (math.floor((nx - r) / cs) + 1) * cs + r + _EPS
    ny = y + dy
    if dy > 0:
        if _collides(maze, nx, ny, r):
            ny = (math.floor((ny + r) / cs)) * cs - r - _EPS
    elif dy < 0:
        if _collides(maze, nx, ny, r):
            ny = (math.floor((ny - r) / cs) + 1) * cs + r + _EPS
    return nx, ny


def _apply_primitive(maze: MazeSpec, x: float, y: float, heading: float,
                     action: int, params: SimParams) -> tuple[float, float, float]:
    if action == Action.TURN_LEFT:
        return x, y, (heading - params.turn_step) % TWO_PI
    if action == Action.TURN_RIGHT:
        return x, y, (heading + params.turn_step) % TWO_PI
    if action == Action.DO_NOTHING:
        return x, y, heading
    speed = params.move_speed * maze.cell_size
    c, s = math.cos(heading), math.sin(heading)
    if action == Action.MOVE_FORWARD:
        dx, dy = c * speed, s * speed
    elif action == Action.MOVE_BACKWARD:
        dx, dy = -c * speed, -s * speed
    elif action == Action.MOVE_LEFT:
        dx, dy = s * speed, -c * speed
    elif action == Action.MOVE_RIGHT:
        dx, dy = -s * speed, c * speed
    else:
        raise ValueError(f"unknown action {action}")
    x, y = _slide(maze, x, y, dx, dy, params.agent_radius * maze.cell_size)
    return x, y, heading


def step(state: AgentState, maze: MazeSpec, action: Action | int,
         params: SimParams = DEFAULT_PARAMS) -> AgentState:
    """One logical step: the primitive motion applied `action_repeat` times,
    sliding along walls on contact. Never raises; every action is legal."""
    x, y, heading = state.x, state.y, state.heading
    a = int(action)
    for _ in range(params.action_repeat):
        x, y, heading = _apply_primitive(maze, x, y, heading, a, params)
    return AgentState(x=x, y=y, heading=heading, step_count=state.step_count + 1)


# ---------------------------------------------------------------------------
# Rendering

_RENDER_CHUNK = 2048


def render_poses(maze: MazeSpec, xs: np.ndarray, ys: np.ndarray, headings: np.ndarray,
                 params: SimParams = DEFAULT_PARAMS) -> np.ndarray:
    """Render a batch of poses to uint8 frames [B, H, W, 3].

    One ray per column; walls are perspective-projected with distance shading
    so nearer surfaces are brighter. Goal markers appear on wall faces that
    border a goal cell. Pure numpy, chunked to bound memory.
    """
    xs = np.asarray(xs, dtype=np.float64).ravel()
    ys = np.asarray(ys, dtype=np.float64).ravel()
    headings = np.asarray(headings, dtype=np.float64).ravel()
    n = xs.shape[0]
    out = np.empty((n, params.frame_height, params.frame_width, 3), dtype=np.uint8)
    for lo in range(0, n, _RENDER_CHUNK):
        hi = min(lo + _RENDER_CHUNK, n)
        out[lo:hi] = _render_chunk(maze, xs[lo:hi], ys[lo:hi], headings[lo:hi], params)
    return out


def render(state: AgentState, maze: MazeSpec, params: SimParams = DEFAULT_PARAMS) -> np.ndarray:
    """Render a single pose to a uint8 frame [H, W, 3]."""
    return render_poses(
        maze,
        np.array([state.x]), np.array([state.y]), np.array([state.heading]),
        params,
    )[0]


def _render_chunk(maze: MazeSpec, xs, ys, headings, params: SimParams) -> np.ndarray:
    B = xs.shape[0]
    W, H = params.frame_width, params.frame_height
    cs = maze.cell_size
    wall = maze.wall
    rows, cols = wall.shape

    posx = (xs / cs)[:, None]           # [B,1] in cell units
    posy = (ys / cs)[:, None]
    dirx = np.cos(headings)[:, None]
    diry = np.sin(headings)[:, None]
    plane = math.tan(params.fov / 2.0)
    planex = -np.sin(headings)[:, None] * plane
    planey = np.cos(headings)[:, None] * plane
    camera = (2.0 * (np.arange(W) + 0.5) / W - 1.0)[None, :]   # [1,W]

    rayx = dirx + planex * camera       # [B,W]
    rayy = diry + planey * camera
    tiny = 1e-12
    rayx = np.where(np.abs(rayx) < tiny, tiny, rayx)
    rayy = np.where(np.abs(rayy) < tiny, tiny, rayy)

    mapx = np.floor(posx).astype(np.int64) + np.zeros_like(rayx, dtype=np.int64)
    mapy = np.floor(posy).astype(np.int64) + np.zeros_like(rayx, dtype=np.int64)
    deltax = np.abs(1.0 / rayx)
    deltay = np.abs(1.0 / rayy)
    stepx = np.where(rayx < 0, -1, 1).astype(np.int64)
    stepy = np.where(rayy < 0, -1, 1).astype(np.int64)
    sidedx = np.where(rayx < 0, (posx - mapx) * deltax, (mapx + 1.0 - posx) * deltax)
    sidedy = np.where(rayy < 0, (posy - mapy) * deltay, (mapy + 1.0 - posy) * deltay)

    side = np.zeros(rayx.shape, dtype=np.int8)
    active = np.ones(rayx.shape, dtype=bool)
    max_iter = rows + cols + 4
    for _ in range(max_iter):
        stepping_x = (sidedx <= sidedy) & active
        stepping_y = (~(sidedx <= sidedy)) & active
        sidedx = np.where(stepping_x, sidedx + deltax, sidedx)
        mapx = np.where(stepping_x, mapx + stepx, mapx)
        sidedy = np.where(stepping_y, sidedy + deltay, sidedy)
        mapy = np.where(stepping_y, mapy + stepy, mapy)
        side = np.where(stepping_x, np.int8(0), np.where(stepping_y, np.int8(1), side))
        np.clip(mapx, 0, cols - 1, out=mapx)
        np.clip(mapy, 0, rows - 1, out=mapy)
        hit = wall[mapy, mapx]
        active &= ~hit
        if not active.any():
            break

    perp = np.where(side == 0, sidedx - deltax, sidedy - deltay)
    np.maximum(perp, 1e-6, out=perp)

    wallc = np.where(side == 0, posy + perp * rayy, posx + perp * rayx)
    u = wallc - np.floor(wallc)
    flip = ((side == 0) & (rayx > 0)) | ((side == 1) & (rayy < 0))
    u = np.where(flip, 1.0 - u, u)

    # Face the ray entered through; if the cell in front of that face is a
    # goal cell, the face wears the goal's marker texture.
    prevx = np.where(side == 0, mapx - stepx, mapx)
    prevy = np.where(side == 1, mapy - stepy, mapy)
    np.clip(prevx, 0, cols - 1, out=prevx)
    np.clip(prevy, 0, rows - 1, out=prevy)
    marker = maze.goal_marker[prevy, prevx]
    texid = maze.tex[mapy, mapx].astype(np.int64)
    n_wall_tex = len(PALETTES[maze.palette])
    texid = np.where(marker >= 0, n_wall_tex + marker, texid)

    # Column fill (float32: per-pixel phase is the hot path).
    perp32 = perp.astype(np.float32)
    line_h = np.float32(H) / perp32                     # [B,W]
    top = (np.float32(H) - line_h) * np.float32(0.5)
    rows_idx = np.arange(H, dtype=np.float32)[None, None, :]    # [1,1,H]
    v = (rows_idx + np.float32(0.5) - top[..., None]) / line_h[..., None]  # [B,W,H]
    on_wall = (v >= 0.0) & (v < 1.0)

    t = TEXTURE_TILE
    tx = np.clip((u * t).astype(np.int32), 0, t - 1)
    ty = np.clip((v * np.float32(t)).astype(np.int32), 0, t - 1)
    tex32 = _textures_f32(maze)
    texel = tex32[texid[..., None], ty, tx[..., None]]  # [B,W,H,3] float32

    shade = (1.0 / (1.0 + params.shade_alpha * perp * cs)).astype(np.float32)
    shade = np.where(side == 1, shade * np.float32(params.side_shade), shade)
    texel *= shade[..., None, None]

    # Floor casting: rows below the wall base show a world-anchored checker,
    # so the ground texture encodes position rather than a flat color.
    below = (rows_idx + 0.5) > np.float32(H / 2.0)          # [1,1,H]
    row_dist = np.where(below, np.float32(H) / np.maximum(2.0 * (rows_idx + 0.5) - H, 1e-6),
                        np.float32(0.0))                     # [1,1,H] perp distance
    fx = posx[..., None] + row_dist * rayx[..., None]        # [B,W,H]
    fy = posy[..., None] + row_dist * rayy[..., None]
    checker = ((np.floor(fx) + np.floor(fy)) % 2.0) >= 1.0
    floor_a = np.array(params.floor_rgb, dtype=np.float32)
    floor_b = floor_a * np.float32(0.55)
    fshade = (1.0 / (1.0 + np.float32(params.shade_alpha) * row_dist * np.float32(cs)))
    floor_rgb = np.where(checker[..., None], floor_b, floor_a) * fshade[..., None]

    ceiling = np.array(params.ceiling_rgb, dtype=np.float32)
    bg = np.where(below[..., None], floor_rgb, ceiling)
    frame = np.where(on_wall[..., None], texel, bg)

    return frame.transpose(0, 2, 1, 3).astype(np.uint8)


_TEX_F32_CACHE: dict[int, np.ndarray] = {}


def _textures_f32(maze: MazeSpec) -> np.ndarray:
    key = id(maze.textures)
    cached = _TEX_F32_CACHE.get(key)
    if cached is None:
        if len(_TEX_F32_CACHE) > 64:
            _TEX_F32_CACHE.clear()
        cached = _TEX_F32_CACHE[key] = maze.textures.astype(np.float32)
    return cached


# ---------------------------------------------------------------------------
# Observations and image export

def stack_observation(prev_frame: np.ndarray, frame: np.ndarray) -> np.ndarray:
    """An observation is the stack (previous frame, current frame)."""
    if prev_frame.shape != frame.shape:
        raise ValueError("observation frames must share one resolution")
    return np.stack([prev_frame, frame])


def initial_observation(frame: np.ndarray) -> np.ndarray:
    return stack_observation(frame, frame)


def write_ppm(frame: np.ndarray, path) -> None:
    """Write a frame (or any uint8 [H,W,3]) as binary PPM (P6)."""
    h, w = frame.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(frame, dtype=np.uint8).tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a P6 PPM file")
    w, h = (int(v) for v in parts[1].split())
    raw = parts[3][: w * h * 3]
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)
