#!/usr/bin/env python3
"""Generate the packaged maze layouts (1 train, 3 val, 7 test).

Recursive-backtracker carving on a 2-cell lattice, then extra wall openings
to create loops, then goal/spawn placement maximizing pairwise separation.
Run once; the .maze files are committed as package data.
"""

import sys
from collections import deque
from pathlib import Path

import numpy as np

SIZE = 15  # odd


def carve(seed: int, loop_frac: float) -> np.ndarray:
    rng = np.random.default_rng(seed)
    wall = np.ones((SIZE, SIZE), dtype=bool)
    cells = [(r, c) for r in range(1, SIZE, 2) for c in range(1, SIZE, 2)]
    start = cells[rng.integers(len(cells))]
    wall[start] = False
    stack = [start]
    while stack:
        r, c = stack[-1]
        nbrs = []
        for dr, dc in ((2, 0), (-2, 0), (0, 2), (0, -2)):
            nr, nc = r + dr, c + dc
            if 1 <= nr < SIZE - 1 and 1 <= nc < SIZE - 1 and wall[nr, nc]:
                nbrs.append((nr, nc))
        if not nbrs:
            stack.pop()
            continue
        nr, nc = nbrs[rng.integers(len(nbrs))]
        wall[(r + nr) // 2, (c + nc) // 2] = False
        wall[nr, nc] = False
        stack.append((nr, nc))
    # open extra walls between corridor cells -> loops
    candidates = []
    for r in range(1, SIZE - 1):
        for c in range(1, SIZE - 1):
            if not wall[r, c]:
                continue
            if not wall[r - 1, c] and not wall[r + 1, c]:
                candidates.append((r, c))
            elif not wall[r, c - 1] and not wall[r, c + 1]:
                candidates.append((r, c))
    rng.shuffle(candidates)
    for r, c in candidates[: int(len(candidates) * loop_frac)]:
        wall[r, c] = False
    return wall


def bfs_dist(wall: np.ndarray, src) -> np.ndarray:
    d = np.full(wall.shape, -1, dtype=int)
    d[src] = 0
    q = deque([src])
    while q:
        r, c = q.popleft()
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < SIZE and 0 <= nc < SIZE and not wall[nr, nc] and d[nr, nc] < 0:
                d[nr, nc] = d[r, c] + 1
                q.append((nr, nc))
    return d


def spread_points(wall: np.ndarray, k: int, seed: int, taken=()) -> list:
    rng = np.random.default_rng(seed)
    free = [(r, c) for r in range(SIZE) for c in range(SIZE) if not wall[r, c] and (r, c) not in taken]
    pts = [free[rng.integers(len(free))]]
    dists = [bfs_dist(wall, pts[0])]
    while len(pts) < k:
        best, best_score = None, -1
        for cand in free:
            if cand in pts or cand in taken:
                continue
            score = min(int(d[cand]) for d in dists)
            if score > best_score:
                best, best_score = cand, score
        pts.append(best)
        dists.append(bfs_dist(wall, best))
    return pts


def render(wall, goals, spawns) -> str:
    grid = [["#" if wall[r, c] else "." for c in range(SIZE)] for r in range(SIZE)]
    for i, (r, c) in enumerate(goals):
        grid[r][c] = str(i + 1)
    for r, c in spawns:
        grid[r][c] = "S"
    return "\n".join("".join(row) for row in grid)


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("src/sptm/layouts")
    out.mkdir(parents=True, exist_ok=True)
    specs = [("train", 11, 0.35)]
    specs += [(f"val-{i}", 20 + i, [0.30, 0.35, 0.25][i - 1]) for i in (1, 2, 3)]
    specs += [(f"test-{i}", 40 + i, [0.30, 0.35, 0.25, 0.40, 0.30, 0.20, 0.35][i - 1]) for i in range(1, 8)]
    for name, seed, loops in specs:
        wall = carve(seed, loops)
        goals = spread_points(wall, 4, seed * 7 + 1)
        spawns = spread_points(wall, 4, seed * 13 + 5, taken=tuple(goals))
        text = "cell_size=1.0\npalette=diverse\n" + render(wall, goals, spawns) + "\n"
        (out / f"{name}.maze").write_text(text)
        free = int((~wall).sum())
        print(f"{name}: {free} free cells")


if __name__ == "__main__":
    main()
