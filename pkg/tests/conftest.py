import numpy as np
import pytest

from sptm import mazes

# Straight east-west corridor along row 1 (x from 1 to 13), used wherever a
# test needs a predictable line of sight.
CORRIDOR_LAYOUT = """\
cell_size=1.0
palette=diverse
###############
#S...........1#
#############.#
#2.3.4........#
###############
"""

# Small open room with one interior wall block; quick to explore.
TINY_LAYOUT = """\
cell_size=1.0
palette=diverse
#########
#S......#
#.##.#1.#
#.......#
#2.#.##.#
#....S..#
#.3###.4#
#.......#
#########
"""


@pytest.fixture(scope="session")
def corridor_maze():
    return mazes.make_maze(CORRIDOR_LAYOUT, texture_seed=3, name="corridor")


@pytest.fixture(scope="session")
def tiny_maze():
    return mazes.make_maze(TINY_LAYOUT, texture_seed=7, name="tiny")


@pytest.fixture(scope="session")
def train_maze():
    return mazes.builtin_maze("train", texture_seed=0)


def rng(seed=0):
    return np.random.default_rng(seed)
