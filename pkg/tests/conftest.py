"""Shared fixtures for the reward-lens tests."""

from typing import Iterable, Tuple

import numpy as np
import pytest

from reward_lens.gridworld import AGENT, GOAL, GRID_SIZE, EnvSpec, Grid
from reward_lens.reward_learning import make_quirk_oracle, make_score_oracle
from reward_lens.tensor_core import RewardNet


def make_grid(agent: Tuple[int, int], goals: Iterable[Tuple[int, int]] = ()) -> Grid:
    """Grid with goals drawn first and the agent on top."""
    grid = np.zeros((GRID_SIZE, GRID_SIZE))
    for row, col in goals:
        grid[row, col] = GOAL
    grid[agent] = AGENT
    return grid


@pytest.fixture(scope="session")
def quirk_oracle() -> RewardNet:
    return make_quirk_oracle()


@pytest.fixture(scope="session")
def score_oracle() -> RewardNet:
    return make_score_oracle()


@pytest.fixture
def coinflip() -> EnvSpec:
    return EnvSpec("coinflip")


@pytest.fixture
def twogoals() -> EnvSpec:
    return EnvSpec("twogoals")


@pytest.fixture
def goaldestroyer() -> EnvSpec:
    return EnvSpec("goaldestroyer")
