"""Maze worlds: ASCII layouts, texture palettes, and the MazeSpec container.

A maze is a rectangular grid of unit cells. Wall cells carry a texture id,
free cells are walkable. Exactly four goal cells (digits 1-4 in the layout)
are marked by four special textures whose appearance is shared by every maze,
so a goal looks the same no matter which world it sits in. Texture placement
on ordinary walls is randomized per seed; geometry never depends on the seed.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

import numpy as np

FREE = 0
WALL = 1

N_GOALS = 4
TEXTURE_TILE = 16  # texture raster is TEXTURE_TILE x TEXTURE_TILE RGB


class MazeError(ValueError):
    """Raised for malformed or inconsistent maze layouts."""


@dataclass(frozen=True)
class TextureDesc:
    """Procedural wall pattern: two colors arranged by a named pattern."""

    pattern: str  # checker | vstripe | hstripe | bricks | dots | solid | diag
    color_a: tuple[int, int, int]
    color_b: tuple[int, int, int]


# Marker textures for the four goals. These are deliberately loud and are the
# same in every maze, so "goal 3" is recognizable across worlds.
GOAL_MARKERS = (
    TextureDesc("diag", (255, 40, 220), (255, 240, 60)),
    TextureDesc("checker", (40, 230, 255), (10, 10, 30)),
    TextureDesc("vstripe", (250, 40, 40), (250, 250, 250)),
    TextureDesc("dots", (40, 250, 90), (15, 25, 15)),
)

# Loud, mutually distant colors: at low render resolutions the dominant cue
# a wall gives is its color pair, so the palette spreads hue and brightness.
DIVERSE_PALETTE = (
    TextureDesc("bricks", (235, 60, 40), (120, 20, 10)),
    TextureDesc("checker", (40, 90, 235), (200, 220, 255)),
    TextureDesc("vstripe", (40, 200, 60), (10, 70, 20)),
    TextureDesc("hstripe", (245, 220, 40), (120, 100, 10)),
    TextureDesc("dots", (200, 60, 220), (60, 10, 70)),
    TextureDesc("solid", (245, 245, 245), (245, 245, 245)),
    TextureDesc("bricks", (40, 220, 220), (10, 90, 100)),
    TextureDesc("checker", (250, 140, 30), (90, 45, 10)),
    TextureDesc("vstripe", (250, 250, 250), (30, 30, 30)),
    TextureDesc("hstripe", (140, 70, 250), (50, 20, 110)),
    TextureDesc("diag", (170, 250, 60), (60, 110, 20)),
    TextureDesc("solid", (25, 25, 35), (25, 25, 35)),
)

# Mostly one bland texture with rare colorful inclusions; used for the
# low-texture stress configuration.
HOMOGENEOUS_PALETTE = (
    TextureDesc("solid", (128, 128, 124), (128, 128, 124)),
    TextureDesc("checker", (200, 60, 60), (240, 220, 200)),
    TextureDesc("vstripe", (60, 90, 200), (220, 220, 240)),
    TextureDesc("dots", (230, 200, 60), (40, 40, 40)),
)
HOMOGENEOUS_INCLUSION_RATE = 0.08

PALETTES = {"diverse": DIVERSE_PALETTE, "homogeneous": HOMOGENEOUS_PALETTE}


def rasterize_texture(desc: TextureDesc, size: int = TEXTURE_TILE) -> np.ndarray:
    """Render a TextureDesc to a size x size x 3 uint8 tile, deterministically."""
    a = np.array(desc.color_a, dtype=np.float64)
    b = np.array(desc.color_b, dtype=np.float64)
    ys, xs = np.mgrid[0:size, 0:size]
    if desc.pattern == "checker":
        m = ((xs // 8 + ys // 8) % 2).astype(bool)
    elif desc.pattern == "vstripe":
        m = ((xs // 8) % 2).astype(bool)
    elif desc.pattern == "hstripe":
        m = ((ys // 8) % 2).astype(bool)
    elif desc.pattern == "bricks":
        row = ys // 8
        shift = (row % 2) * 8
        m = (((xs + shift) % 16 < 2) | (ys % 8 < 2)).astype(bool)
    elif desc.pattern == "dots":
        m = ((xs % 8 >= 3) & (xs % 8 <= 4) & (ys % 8 >= 3) & (ys % 8 <= 4)).astype(bool)
    elif desc.pattern == "diag":
        m = (((xs + ys) // 8) % 2).astype(bool)
    elif desc.pattern == "solid":
        m = np.zeros((size, size), dtype=bool)
    else:
        raise MazeError(f"unknown texture pattern {desc.pattern!r}")
    tile = np.where(m[..., None], b, a)
    return tile.astype(np.uint8)


@dataclass
class MazeSpec:
    """Immutable world description consumed by the simulator and harness."""

    name: str
    wall: np.ndarray          # bool [rows, cols], True = wall
    tex: np.ndarray           # int32 [rows, cols], texture index per wall cell
    goal_marker: np.ndarray   # int32 [rows, cols], goal index 0..3 on goal cells else -1
    goal_cells: list[tuple[int, int]]   # (col, row) for goals 1..4
    spawn_cells: list[tuple[int, int]]  # (col, row)
    cell_size: float
    palette: str
    texture_seed: int
    textures: np.ndarray = field(repr=False, default=None)  # uint8 [n, T, T, 3]

    @property
    def rows(self) -> int:
        return self.wall.shape[0]

    @property
    def cols(self) -> int:
        return self.wall.shape[1]

    def goal_position(self, goal_id: int) -> tuple[float, float]:
        """World coordinates of a goal cell center. goal_id in 0..3."""
        c, r = self.goal_cells[goal_id]
        return ((c + 0.5) * self.cell_size, (r + 0.5) * self.cell_size)

    def spawn_position(self, spawn_id: int) -> tuple[float, float]:
        c, r = self.spawn_cells[spawn_id]
        return ((c + 0.5) * self.cell_size, (r + 0.5) * self.cell_size)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (int(x / self.cell_size), int(y / self.cell_size))

    def is_free_cell(self, col: int, row: int) -> bool:
        if 0 <= row < self.rows and 0 <= col < self.cols:
            return not self.wall[row, col]
        return False

    def free_cell_count(self) -> int:
        return int((~self.wall).sum())


def _connected(free: np.ndarray) -> bool:
    """Breadth-first reachability over the free-cell subgraph."""
    rows, cols = free.shape
    start = None
    for r in range(rows):
        for c in range(cols):
            if free[r, c]:
                start = (r, c)
                break
        if start:
            break
    if start is None:
        return False
    seen = np.zeros_like(free, dtype=bool)
    stack = [start]
    seen[start] = True
    while stack:
        r, c = stack.pop()
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < rows and 0 <= nc < cols and free[nr, nc] and not seen[nr, nc]:
                seen[nr, nc] = True
                stack.append((nr, nc))
    return bool((seen == free).all())


def make_maze(layout_text: str, texture_seed: int, name: str = "maze") -> MazeSpec:
    """Parse an ASCII layout into a MazeSpec with seeded texture placement.

    Layout format: optional `key=value` header lines (cell_size, palette),
    then a rectangular grid of `#` wall, `.` free, `1`-`4` goal, `S` spawn.
    The same (layout, seed) always produces the same maze; a different seed
    changes only which texture each wall cell wears.
    """
    cell_size = 1.0
    palette = "diverse"
    grid_lines: list[str] = []
    for raw in layout_text.splitlines():
        line = raw.rstrip("\n\r")
        if not line.strip():
            continue
        if "=" in line and line.split("=", 1)[0].strip().replace("_", "").isalpha():
            key, _, value = line.partition("=")
            key = key.strip()
            if key == "cell_size":
                cell_size = float(value)
            elif key == "palette":
                palette = value.strip()
            else:
                raise MazeError(f"{name}: unknown header {key!r}")
            continue
        grid_lines.append(line)

    if palette not in PALETTES:
        raise MazeError(f"{name}: unknown palette {palette!r}")
    if cell_size <= 0:
        raise MazeError(f"{name}: cell_size must be positive")
    if len(grid_lines) < 3:
        raise MazeError(f"{name}: grid too small")
    cols = len(grid_lines[0])
    if any(len(l) != cols for l in grid_lines):
        raise MazeError(f"{name}: grid is not rectangular")
    rows = len(grid_lines)

    wall = np.zeros((rows, cols), dtype=bool)
    goal_marker = np.full((rows, cols), -1, dtype=np.int32)
    goals: dict[int, tuple[int, int]] = {}
    spawns: list[tuple[int, int]] = []
    for r, line in enumerate(grid_lines):
        for c, ch in enumerate(line):
            if ch == "#":
                wall[r, c] = True
            elif ch == ".":
                pass
            elif ch in "1234":
                gid = int(ch) - 1
                if gid in goals:
                    raise MazeError(f"{name}: duplicate goal marker {ch}")
                goals[gid] = (c, r)
                goal_marker[r, c] = gid
            elif ch == "S":
                spawns.append((c, r))
            else:
                raise MazeError(f"{name}: bad cell character {ch!r} at row {r}")

    if sorted(goals) != list(range(N_GOALS)):
        raise MazeError(f"{name}: expected goal markers 1-4 exactly once each, got {sorted(g + 1 for g in goals)}")
    if not spawns:
        raise MazeError(f"{name}: no spawn cells (S)")
    border = np.concatenate([wall[0, :], wall[-1, :], wall[:, 0], wall[:, -1]])
    if not border.all():
        raise MazeError(f"{name}: border must be solid wall")
    if not _connected(~wall):
        raise MazeError(f"{name}: disconnected free space")

    descs = PALETTES[palette]
    rng = np.random.default_rng(texture_seed)
    if palette == "homogeneous":
        pick = rng.random((rows, cols))
        tex = np.zeros((rows, cols), dtype=np.int32)
        inclusion = pick < HOMOGENEOUS_INCLUSION_RATE
        tex[inclusion] = rng.integers(1, len(descs), size=int(inclusion.sum()), dtype=np.int32)
    else:
        tex = rng.integers(0, len(descs), size=(rows, cols), dtype=np.int32)
    tex[~wall] = 0

    tiles = [rasterize_texture(d) for d in descs] + [rasterize_texture(d) for d in GOAL_MARKERS]
    textures = np.stack(tiles)

    return MazeSpec(
        name=name,
        wall=wall,
        tex=tex,
        goal_marker=goal_marker,
        goal_cells=[goals[g] for g in range(N_GOALS)],
        spawn_cells=spawns,
        cell_size=cell_size,
        palette=palette,
        texture_seed=texture_seed,
        textures=textures,
    )


def marker_texture_index(maze: MazeSpec, goal_id: int) -> int:
    """Index of a goal's marker tile inside maze.textures."""
    return len(PALETTES[maze.palette]) + goal_id


def load_layout(name: str) -> str:
    """Read a packaged layout by name (e.g. 'train', 'val-1', 'test-3')."""
    ref = importlib.resources.files("sptm") / "layouts" / f"{name}.maze"
    try:
        return ref.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise MazeError(f"no packaged layout named {name!r}") from None


def builtin_maze(name: str, texture_seed: int = 0) -> MazeSpec:
    return make_maze(load_layout(name), texture_seed, name=name)


def list_layouts() -> list[str]:
    ref = importlib.resources.files("sptm") / "layouts"
    return sorted(p.name[: -len(".maze")] for p in ref.iterdir() if p.name.endswith(".maze"))
