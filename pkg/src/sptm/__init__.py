"""Topological-memory navigation at desk scale.

A raycast maze simulator, self-supervised similarity and locomotion networks
trained from random trajectories, a topological memory graph with visual
shortcut detection, a localize-plan-waypoint navigation agent, baselines, and
an evaluation harness.
"""

from .mazes import MazeSpec, MazeError, make_maze, builtin_maze, load_layout, list_layouts
from .sim import (
    Action,
    AgentState,
    SimParams,
    DEFAULT_PARAMS,
    step,
    render,
    render_poses,
    spawn_state,
    stack_observation,
    initial_observation,
)
from .seeding import rng_for

__version__ = "0.1.0"
