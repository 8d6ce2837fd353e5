"""Exploration recordings: the frame/action sequences a walkthrough produces.

Ground-truth poses ride along for the harness and the UI overlay; the agent
itself never reads them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mazes import MazeSpec


@dataclass
class ExplorationRecording:
    """A walkthrough: frames, the actions between them, and (harness-only)
    ground-truth poses. |actions| = |frames| - 1."""

    frames: np.ndarray            # uint8 [T+1, H, W, 3]
    actions: np.ndarray           # int8 [T]
    poses: np.ndarray | None      # float64 [T+1, 3] (x, y, heading), harness/UI only
    maze_name: str = ""

    def __post_init__(self):
        if len(self.actions) != len(self.frames) - 1:
            raise ValueError("need |actions| = |frames| - 1")
        if self.poses is not None and len(self.poses) != len(self.frames):
            raise ValueError("poses must align 1:1 with frames")

    @property
    def duration(self) -> int:
        return len(self.actions)


def coverage_fraction(recording: ExplorationRecording, maze: MazeSpec) -> float:
    """Fraction of free cells visited by the recorded poses (harness metric)."""
    assert recording.poses is not None
    cells = {maze.cell_of(x, y) for x, y, _ in recording.poses}
    return len(cells & {(c, r) for r in range(maze.rows) for c in range(maze.cols)
                        if maze.is_free_cell(c, r)}) / maze.free_cell_count()
