"""
Deterministic 11x11 gridworlds: CoinFlipGoal, TwoGoals, GoalDestroyer and
ScoreGoal (with and without its score strip).

Observations are 11x11 intensity grids with the code

    0.0  empty
    0.5  goal
    0.75 goal destroyer
    1.0  agent, or a lit cell of the score strip (row 10, ScoreGoal only)

The agent is drawn last, so it hides whatever it stands on. States are
immutable values; ``step`` returns a new state.
"""

import json
import logging
from collections import deque
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Any, Callable, Dict, FrozenSet, Iterable, List, Optional, Tuple, Union

import numpy as np
import numpy.typing as npt

from reward_lens.errors import FormatError, ShapeError, UsageError
from reward_lens.tensor_core import Tensor, seeded_rng
from reward_lens.types import Action, EnvName, TransitionMeta, TransitionRecord

logger = logging.getLogger(__name__)

GRID_SIZE = 11
CELLS = GRID_SIZE * GRID_SIZE
STRIP_ROW = GRID_SIZE - 1

EMPTY = 0.0
GOAL = 0.5
DESTROYER = 0.75
AGENT = 1.0
LIT = 1.0

DEFAULT_EPISODE_CAP = 30

ACTIONS: Tuple[Action, ...] = ("up", "down", "left", "right")
MOVES: Dict[str, Tuple[int, int]] = {
    "up": (-1, 0),
    "down": (1, 0),
    "left": (0, -1),
    "right": (0, 1),
}

ENV_NAMES: Tuple[EnvName, ...] = (
    "coinflip",
    "twogoals",
    "goaldestroyer",
    "scoregoal",
    "scoregoal_nostrip",
)

Position = Tuple[int, int]
Grid = Tensor

TOP_LEFT: Position = (0, 0)
BOTTOM_RIGHT: Position = (GRID_SIZE - 1, GRID_SIZE - 1)
# ScoreGoal's playfield stops above the strip
PLAYFIELD_BOTTOM_RIGHT: Position = (STRIP_ROW - 1, GRID_SIZE - 1)


@dataclass(frozen=True)
class EnvSpec:
    """
    Environment variant and episode length.

    Episode ``i`` of a run seeded with ``seed`` uses episode seed
    ``seed + i`` (see ``episode_seed``).
    """

    name: EnvName
    episode_cap: int = DEFAULT_EPISODE_CAP

    def __post_init__(self) -> None:
        if self.name not in ENV_NAMES:
            raise UsageError(
                f"Unknown environment '{self.name}'", details={"known": list(ENV_NAMES)}
            )
        if self.episode_cap < 1:
            raise UsageError(f"episode_cap must be at least 1, got {self.episode_cap}")

    @property
    def has_strip(self) -> bool:
        """Whether row 10 is reserved for the score strip."""
        return self.name in ("scoregoal", "scoregoal_nostrip")

    @property
    def strip_visible(self) -> bool:
        return self.name == "scoregoal"

    @property
    def playfield_rows(self) -> int:
        return STRIP_ROW if self.has_strip else GRID_SIZE

    @staticmethod
    def episode_seed(seed: int, index: int) -> int:
        return seed + index


@dataclass(frozen=True)
class EnvState:
    """
    Full environment state.

    ``goals`` is the set of goals still in play; the destroyer stays on the
    board after it fires. ``lit`` counts lit score-strip cells.
    """

    spec: EnvSpec
    agent: Position
    goals: FrozenSet[Position]
    destroyer: Optional[Position] = None
    destroyed: bool = False
    lit: int = 0
    steps: int = 0
    done: bool = False


@dataclass(frozen=True, eq=False)
class Transition:
    """A rendered ``(s, a, s', r)`` record."""

    s: Grid
    action: Action
    s_prime: Grid
    reward: float
    done: bool
    meta: Optional[TransitionMeta] = None


# ===========================================
# GRIDS
# ===========================================


def as_grid(values: npt.ArrayLike, what: str = "grid") -> Grid:
    """
    Coerce nested rows or a flat vector to an 11x11 grid.

    Raises:
        ShapeError: If there are not exactly 11x11 values
        UsageError: If a value lies outside [0, 1]
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape == (CELLS,):
        arr = arr.reshape(GRID_SIZE, GRID_SIZE)
    if arr.shape != (GRID_SIZE, GRID_SIZE):
        raise ShapeError(what, (GRID_SIZE, GRID_SIZE), tuple(arr.shape))
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise UsageError(f"{what} values must lie in [0, 1]")
    return arr.copy()


def encode_transition(s: npt.ArrayLike, s_prime: npt.ArrayLike) -> Tensor:
    """Network input for ``R(s, s')``: ``concat(flatten(s), flatten(s'))``, 242 values."""
    return np.concatenate([as_grid(s, "s").reshape(-1), as_grid(s_prime, "s'").reshape(-1)])


def render(state: EnvState) -> Grid:
    """Observation of ``state``."""
    grid = np.zeros((GRID_SIZE, GRID_SIZE), dtype=np.float64)
    for row, col in state.goals:
        grid[row, col] = GOAL
    if state.destroyer is not None:
        grid[state.destroyer] = DESTROYER
    grid[state.agent] = AGENT
    if state.spec.strip_visible:
        grid[STRIP_ROW, : min(state.lit, GRID_SIZE)] = LIT
    return grid


# ===========================================
# DYNAMICS
# ===========================================


def _free_cells(spec: EnvSpec, occupied: Iterable[Position]) -> List[Position]:
    taken = set(occupied)
    return [
        (row, col)
        for row in range(spec.playfield_rows)
        for col in range(GRID_SIZE)
        if (row, col) not in taken
    ]


def _goal_layouts(spec: EnvSpec) -> List[Tuple[FrozenSet[Position], Optional[Position]]]:
    """Possible (goals, destroyer) layouts at reset, in coin order."""
    if spec.name == "coinflip":
        return [(frozenset([TOP_LEFT]), None), (frozenset([BOTTOM_RIGHT]), None)]
    if spec.name == "twogoals":
        return [(frozenset([TOP_LEFT, BOTTOM_RIGHT]), None)]
    if spec.name == "goaldestroyer":
        return [(frozenset([TOP_LEFT]), BOTTOM_RIGHT)]
    return [(frozenset([TOP_LEFT]), None), (frozenset([PLAYFIELD_BOTTOM_RIGHT]), None)]


def reset(spec: EnvSpec, episode_seed: int) -> EnvState:
    """
    Start an episode.

    Variants with two layouts (coinflip, scoregoal) pick one with a fair
    coin; the agent starts on a uniformly random free playfield cell. Both
    draws come from a PCG64 generator seeded with ``episode_seed``.

    Args:
        spec: Environment variant
        episode_seed: Seed for this episode

    Returns:
        The initial state
    """
    rng = seeded_rng(episode_seed)
    layouts = _goal_layouts(spec)
    coin = int(rng.integers(2))
    goals, destroyer = layouts[coin % len(layouts)]
    occupied = set(goals) | ({destroyer} if destroyer else set())
    free = _free_cells(spec, occupied)
    agent = free[int(rng.integers(len(free)))]
    return EnvState(spec=spec, agent=agent, goals=goals, destroyer=destroyer)


def initial_states(spec: EnvSpec) -> List[EnvState]:
    """Every state ``reset`` can return for ``spec``."""
    states: List[EnvState] = []
    for goals, destroyer in _goal_layouts(spec):
        occupied = set(goals) | ({destroyer} if destroyer else set())
        for agent in _free_cells(spec, occupied):
            states.append(EnvState(spec=spec, agent=agent, goals=goals, destroyer=destroyer))
    return states


def move(spec: EnvSpec, position: Position, action: Action) -> Position:
    """Position after ``action``; moves off the playfield leave it unchanged."""
    if action not in MOVES:
        raise UsageError(f"Unknown action '{action}'", details={"known": list(ACTIONS)})
    d_row, d_col = MOVES[action]
    row, col = position[0] + d_row, position[1] + d_col
    if 0 <= row < spec.playfield_rows and 0 <= col < GRID_SIZE:
        return (row, col)
    return position


def transition(state: EnvState, action: Action) -> EnvState:
    """
    Cap-free dynamics: the next state, without touching the step count.

    Reaching a goal ends the episode (and lights one strip cell when the
    variant has a strip). Reaching an untriggered destroyer removes every
    goal for the rest of the episode.
    """
    if state.done:
        raise UsageError("Cannot step a finished episode")
    agent = move(state.spec, state.agent, action)
    if agent in state.goals:
        lit = state.lit + 1 if state.spec.has_strip else state.lit
        return replace(state, agent=agent, lit=lit, done=True)
    if agent == state.destroyer and not state.destroyed:
        return replace(state, agent=agent, goals=frozenset(), destroyed=True)
    return replace(state, agent=agent)


def true_reward(state: EnvState, next_state: EnvState) -> float:
    """1.0 iff the agent in ``next_state`` covers a goal present in ``state``."""
    return 1.0 if next_state.agent in state.goals else 0.0


def step(state: EnvState, action: Action) -> Tuple[Transition, EnvState]:
    """
    Advance one step.

    Returns:
        The rendered transition and the next state; the next state is done
        when a goal was reached or the episode cap was hit

    Raises:
        UsageError: If ``state`` is already done
    """
    if state.done:
        raise UsageError("Cannot step a finished episode")
    moved = transition(state, action)
    steps = state.steps + 1
    next_state = replace(moved, steps=steps, done=moved.done or steps >= state.spec.episode_cap)
    record = Transition(
        s=render(state),
        action=action,
        s_prime=render(next_state),
        reward=true_reward(state, next_state),
        done=next_state.done,
    )
    return record, next_state


# ===========================================
# EXPERT
# ===========================================


@lru_cache(maxsize=64)
def goal_distances(rows: int, goals: FrozenSet[Position]) -> Dict[Position, int]:
    """BFS distance from every playfield cell to the nearest goal."""
    dist: Dict[Position, int] = {goal: 0 for goal in goals}
    queue = deque(goals)
    while queue:
        row, col = queue.popleft()
        for d_row, d_col in MOVES.values():
            nxt = (row + d_row, col + d_col)
            if 0 <= nxt[0] < rows and 0 <= nxt[1] < GRID_SIZE and nxt not in dist:
                dist[nxt] = dist[(row, col)] + 1
                queue.append(nxt)
    return dist


def expert_action(state: EnvState) -> Action:
    """
    First step of a shortest path to the nearest goal.

    Ties go to the first action in (up, down, left, right). The destroyer is
    not treated as an obstacle.

    Raises:
        UsageError: If no goal is in play
    """
    if not state.goals:
        raise UsageError("expert_action needs at least one goal")
    dist = goal_distances(state.spec.playfield_rows, state.goals)
    here = dist[state.agent]
    for action in ACTIONS:
        if dist[move(state.spec, state.agent, action)] < here:
            return action
    raise UsageError("expert_action called with the agent already on a goal")


def rollout(
    state: EnvState,
    policy: Callable[[EnvState], Action],
    episode: int = 0,
) -> List[Transition]:
    """Run ``policy`` from ``state`` until the episode ends."""
    transitions: List[Transition] = []
    while not state.done:
        record, state = step(state, policy(state))
        meta: TransitionMeta = {"env": state.spec.name, "episode": episode, "t": len(transitions)}
        transitions.append(replace(record, meta=meta))
    return transitions


def generate_dataset(spec: EnvSpec, episodes: int, seed: int) -> List[Transition]:
    """
    Expert rollouts, concatenated.

    Args:
        spec: Environment variant
        episodes: Number of episodes (at least 1)
        seed: Episode ``i`` is reset with seed ``seed + i``

    Returns:
        All transitions, in episode order

    Raises:
        UsageError: If ``episodes`` < 1
    """
    if episodes < 1:
        raise UsageError(f"episodes must be at least 1, got {episodes}")
    transitions: List[Transition] = []
    for index in range(episodes):
        start = reset(spec, spec.episode_seed(seed, index))
        transitions.extend(rollout(start, expert_action, episode=index))
    positives = sum(1 for t in transitions if t.reward == 1.0)
    logger.info(
        "Generated %d %s transitions over %d episodes (%d rewarding)",
        len(transitions),
        spec.name,
        episodes,
        positives,
    )
    return transitions


def sample_transition(spec: EnvSpec, episode_seed: int, step_index: int) -> Transition:
    """
    Transition ``step_index`` of the expert episode reset with ``episode_seed``.

    Raises:
        UsageError: If the episode is shorter than ``step_index + 1``
    """
    episode = rollout(reset(spec, episode_seed), expert_action)
    if not 0 <= step_index < len(episode):
        raise UsageError(
            f"{spec.name} episode with seed {episode_seed} has {len(episode)} transitions, "
            f"step {step_index} is out of range"
        )
    return episode[step_index]


# ===========================================
# DATASET FILES
# ===========================================


def transition_to_record(t: Transition) -> TransitionRecord:
    """JSON-ready form of a transition."""
    record: TransitionRecord = {
        "s": [float(v) for v in t.s.reshape(-1)],
        "a": t.action,
        "sp": [float(v) for v in t.s_prime.reshape(-1)],
        "r": float(t.reward),
        "done": bool(t.done),
    }
    if t.meta is not None:
        record["meta"] = {
            "env": t.meta["env"],
            "episode": t.meta["episode"],
            "t": t.meta["t"],
        }
    return record


def transition_from_record(record: Any) -> Transition:
    """
    Parse a transition record.

    Raises:
        FormatError: Naming the first missing or malformed field
    """
    if not isinstance(record, dict):
        raise FormatError("transition must be a JSON object")
    for key in ("s", "a", "sp"):
        if key not in record:
            raise FormatError(f"transition is missing '{key}'", field=key)
    if record["a"] not in ACTIONS:
        raise FormatError(f"unknown action {record['a']!r}", field="a")
    grids: Dict[str, Grid] = {}
    for key in ("s", "sp"):
        try:
            grids[key] = as_grid(record[key], key)
        except (UsageError, ValueError, TypeError) as e:
            raise FormatError(f"bad grid '{key}': {e}", field=key) from e
    meta = record.get("meta")
    return Transition(
        s=grids["s"],
        action=record["a"],
        s_prime=grids["sp"],
        reward=float(record.get("r", 0.0)),
        done=bool(record.get("done", False)),
        meta=meta if isinstance(meta, dict) else None,
    )


def save_dataset(path: Union[str, Path], transitions: Iterable[Transition]) -> None:
    """Write transitions as JSON Lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for t in transitions:
            fh.write(json.dumps(transition_to_record(t)))
            fh.write("\n")


def load_dataset(path: Union[str, Path]) -> List[Transition]:
    """
    Read a JSON Lines dataset.

    Raises:
        FormatError: If the file is missing or a line does not parse
    """
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as e:
        raise FormatError(f"cannot read dataset {path}: {e.strerror}", field="path") from e
    transitions: List[Transition] = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            transitions.append(transition_from_record(json.loads(line)))
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}:{number}: invalid JSON ({e.msg})") from e
        except FormatError as e:
            raise FormatError(f"{path}:{number}: {e.message}", field=e.field) from e
    return transitions
