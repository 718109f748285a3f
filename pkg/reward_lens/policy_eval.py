"""
Exact planning in the gridworlds and transfer experiments.

Every reachable state of a variant is enumerated, rewards for each
(state, action) pair come from a reward source (the true reward or a reward
model evaluated on rendered observations), and value iteration yields a
greedy tabular policy. Planning is infinite-horizon: the episode cap is not
part of the state. Rollouts used for evaluation do enforce the cap and score
with the true reward only.
"""

import json
import logging
from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Deque, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt

from reward_lens.errors import FormatError, UsageError
from reward_lens.gridworld import (
    ACTIONS,
    ENV_NAMES,
    EnvSpec,
    EnvState,
    encode_transition,
    generate_dataset,
    initial_states,
    render,
    reset,
    step,
    transition,
    true_reward,
)
from reward_lens.reward_learning import checkpoint_id, encode_dataset
from reward_lens.tensor_core import RewardNet, Tensor, forward_batch, seeded_rng
from reward_lens.types import (
    Action,
    EnvName,
    OutputStatsPayload,
    PolicyPayload,
    ReturnPayload,
    TransferReportPayload,
)

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = 0.95
DEFAULT_TOLERANCE = 1e-9
DEFAULT_EVAL_EPISODES = 200
MAX_ITERATIONS = 100_000

TRANSFER_NOTE = (
    "Policies come from exact value iteration and are scored on a fixed set of "
    "evaluation episodes, so there is no training-run variance to report."
)


# ===========================================
# STATE SPACE
# ===========================================


def state_key(state: EnvState) -> str:
    """Stable string key for a planning state, used in policy files."""
    goals = ";".join(f"{r},{c}" for r, c in sorted(state.goals))
    return (
        f"a={state.agent[0]},{state.agent[1]}|g={goals}|d={int(state.destroyed)}"
        f"|l={state.lit}|t={int(state.done)}"
    )


@dataclass(eq=False)
class StateSpace:
    """
    Reachable states of one variant and their deterministic successors.

    ``next_index[i, a]`` is the successor of state ``i`` under ``ACTIONS[a]``;
    terminal states point at themselves.
    """

    spec: EnvSpec
    states: List[EnvState]
    index: Dict[EnvState, int]
    next_index: npt.NDArray[np.int64]
    terminal: npt.NDArray[np.bool_]

    def __len__(self) -> int:
        return len(self.states)

    def lookup(self, state: EnvState) -> int:
        """
        Index of ``state``; its step count and episode cap are ignored.

        Raises:
            UsageError: If the state is not part of this space
        """
        try:
            return self.index[replace(state, spec=self.spec, steps=0)]
        except KeyError as e:
            raise UsageError(
                f"state {state_key(state)} is not in the {self.spec.name} state space"
            ) from e


def enumerate_states(spec: EnvSpec) -> StateSpace:
    """
    Enumerate every state reachable from any reset state of ``spec``.

    Raises:
        UsageError: If the variant is not supported
    """
    if spec.name not in ENV_NAMES:
        raise UsageError(f"Unsupported environment '{spec.name}'")
    states: List[EnvState] = []
    index: Dict[EnvState, int] = {}
    queue: Deque[EnvState] = deque()
    for start in initial_states(spec):
        index[start] = len(states)
        states.append(start)
        queue.append(start)

    successors: Dict[int, List[int]] = {}
    while queue:
        state = queue.popleft()
        if state.done:
            continue
        row: List[int] = []
        for action in ACTIONS:
            nxt = transition(state, action)
            if nxt not in index:
                index[nxt] = len(states)
                states.append(nxt)
                queue.append(nxt)
            row.append(index[nxt])
        successors[index[state]] = row

    n = len(states)
    next_index = np.empty((n, len(ACTIONS)), dtype=np.int64)
    terminal = np.zeros(n, dtype=bool)
    for i, state in enumerate(states):
        if state.done:
            terminal[i] = True
            next_index[i] = i
        else:
            next_index[i] = successors[i]
    logger.debug("%s: %d states (%d terminal)", spec.name, n, int(terminal.sum()))
    return StateSpace(spec, states, index, next_index, terminal)


# ===========================================
# REWARD SOURCES
# ===========================================


class TrueReward:
    """Ground-truth reward of the environment."""

    tag = "true"

    def transition_rewards(self, space: StateSpace) -> Tensor:
        rewards = np.zeros(space.next_index.shape)
        for i, state in enumerate(space.states):
            if space.terminal[i]:
                continue
            for a in range(len(ACTIONS)):
                rewards[i, a] = true_reward(state, space.states[space.next_index[i, a]])
        return rewards


class ModelReward:
    """
    Reward model evaluated on rendered ``(s, s')`` observations.

    Each distinct state pair is rendered and evaluated once.
    """

    def __init__(self, net: RewardNet, tag: Optional[str] = None):
        self.net = net
        self.tag = tag or checkpoint_id(net)

    def transition_rewards(self, space: StateSpace) -> Tensor:
        pairs: Dict[Tuple[int, int], int] = {}
        for i in np.flatnonzero(~space.terminal):
            for j in space.next_index[i]:
                pairs.setdefault((int(i), int(j)), len(pairs))
        rewards = np.zeros(space.next_index.shape)
        if not pairs:
            return rewards
        observations = [render(state) for state in space.states]
        xs = np.stack([encode_transition(observations[i], observations[j]) for i, j in pairs])
        values = forward_batch(self.net, xs)
        for i in np.flatnonzero(~space.terminal):
            for a, j in enumerate(space.next_index[i]):
                rewards[i, a] = values[pairs[(int(i), int(j))]]
        return rewards


class ScaledReward:
    """``factor`` times another reward source."""

    def __init__(self, source: "RewardSource", factor: float):
        self.source = source
        self.factor = factor
        self.tag = f"{factor}*{source.tag}"

    def transition_rewards(self, space: StateSpace) -> Tensor:
        return self.factor * self.source.transition_rewards(space)


RewardSource = Union[TrueReward, ModelReward, ScaledReward]


# ===========================================
# VALUE ITERATION
# ===========================================


@dataclass(eq=False)
class TabularPolicy:
    """
    Greedy policy and state values over a state space.

    ``rewards`` holds the (state, action) reward table the policy was planned
    with; it is not stored in policy files.
    """

    space: StateSpace
    actions: npt.NDArray[np.int64]
    values: Tensor
    gamma: float
    reward_source: str
    rewards: Optional[Tensor] = None
    iterations: int = 0

    def action_for(self, state: EnvState) -> Action:
        return ACTIONS[int(self.actions[self.space.lookup(state)])]

    def to_dict(self) -> PolicyPayload:
        return {
            "env": self.space.spec.name,
            "gamma": self.gamma,
            "actions": {
                state_key(s): ACTIONS[int(a)] for s, a in zip(self.space.states, self.actions)
            },
            "values": {state_key(s): float(v) for s, v in zip(self.space.states, self.values)},
            "reward_source": self.reward_source,
        }


def _backup(space: StateSpace, rewards: Tensor, values: Tensor, gamma: float) -> Tensor:
    q = rewards + gamma * values[space.next_index]
    q[space.terminal] = 0.0
    return q


def value_iteration(
    space: StateSpace,
    reward_source: RewardSource,
    gamma: float = DEFAULT_GAMMA,
    tol: float = DEFAULT_TOLERANCE,
) -> TabularPolicy:
    """
    Plan the optimal policy under ``reward_source``.

    Bellman backups repeat until the largest value change is below ``tol``.
    Terminal states absorb with value 0. Greedy ties go to the first action
    in (up, down, left, right).

    Args:
        space: Enumerated states
        reward_source: Reward for each (state, action)
        gamma: Discount in (0, 1)
        tol: Convergence threshold on the max value change

    Returns:
        The greedy policy with its values

    Raises:
        UsageError: If ``gamma`` is outside (0, 1) or ``tol`` is not positive
    """
    if not 0.0 < gamma < 1.0:
        raise UsageError(f"gamma must be in (0, 1), got {gamma}")
    if not tol > 0:
        raise UsageError(f"tol must be positive, got {tol}")
    rewards = reward_source.transition_rewards(space)
    values = np.zeros(len(space))
    iterations = 0
    for iterations in range(1, MAX_ITERATIONS + 1):
        updated = _backup(space, rewards, values, gamma).max(axis=1)
        change = float(np.max(np.abs(updated - values)))
        values = updated
        if change < tol:
            break
    else:
        logger.warning("value iteration stopped after %d sweeps without converging", iterations)
    actions = np.argmax(_backup(space, rewards, values, gamma), axis=1).astype(np.int64)
    actions[space.terminal] = 0
    logger.info(
        "%s: value iteration under %s converged in %d sweeps",
        space.spec.name,
        reward_source.tag,
        iterations,
    )
    return TabularPolicy(space, actions, values, gamma, reward_source.tag, rewards, iterations)


def bellman_residual(policy: TabularPolicy) -> float:
    """
    Largest ``|max_a Q(s, a) - V(s)|`` over the space.

    Raises:
        UsageError: If the policy was loaded from a file and has no reward table
    """
    if policy.rewards is None:
        raise UsageError("policy has no reward table; re-plan it to check the residual")
    q = _backup(policy.space, policy.rewards, policy.values, policy.gamma)
    return float(np.max(np.abs(q.max(axis=1) - policy.values)))


# ===========================================
# EVALUATION
# ===========================================


@dataclass(frozen=True)
class PolicyReturn:
    """Mean true return over evaluation episodes, with its standard error."""

    mean: float
    stderr: float
    episodes: int

    def to_dict(self) -> ReturnPayload:
        return {"mean": self.mean, "stderr": self.stderr, "episodes": self.episodes}


def _summarize(returns: Sequence[float]) -> PolicyReturn:
    arr = np.asarray(returns, dtype=np.float64)
    stderr = float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return PolicyReturn(float(arr.mean()), stderr, len(arr))


def _episode_return(state: EnvState, choose: Callable[[EnvState], Action]) -> float:
    total = 0.0
    while not state.done:
        record, state = step(state, choose(state))
        total += record.reward
    return total


def evaluate_policy(
    policy: TabularPolicy,
    spec: EnvSpec,
    episodes: int = DEFAULT_EVAL_EPISODES,
    seed: int = 0,
) -> PolicyReturn:
    """
    Roll the greedy policy and score it with the true reward.

    Episode ``i`` is reset with seed ``seed + i``.

    Raises:
        UsageError: If the policy was planned for a different variant
    """
    if policy.space.spec.name != spec.name:
        raise UsageError(
            f"policy was planned for {policy.space.spec.name}, not {spec.name}"
        )
    if episodes < 1:
        raise UsageError(f"episodes must be at least 1, got {episodes}")
    returns = [
        _episode_return(reset(spec, spec.episode_seed(seed, i)), policy.action_for)
        for i in range(episodes)
    ]
    return _summarize(returns)


def _random_chooser(seed: int, episode: int) -> Callable[[EnvState], Action]:
    rng = seeded_rng(seed, episode)

    def choose(_state: EnvState) -> Action:
        return ACTIONS[int(rng.integers(len(ACTIONS)))]

    return choose


def evaluate_random_policy(
    spec: EnvSpec, episodes: int = DEFAULT_EVAL_EPISODES, seed: int = 0
) -> PolicyReturn:
    """True return of a uniformly random policy on the same evaluation episodes."""
    if episodes < 1:
        raise UsageError(f"episodes must be at least 1, got {episodes}")
    returns = [
        _episode_return(reset(spec, spec.episode_seed(seed, i)), _random_chooser(seed, i))
        for i in range(episodes)
    ]
    return _summarize(returns)


# ===========================================
# POLICY FILES
# ===========================================


def save_policy(policy: TabularPolicy, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(policy.to_dict()), encoding="utf-8")


def load_policy(path: Union[str, Path]) -> TabularPolicy:
    """
    Read a policy file and re-attach it to a freshly enumerated state space.

    Raises:
        FormatError: If the file is missing, malformed, or does not cover the space
    """
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise FormatError(f"cannot read policy {path}: {e.strerror}", field="path") from e
    except json.JSONDecodeError as e:
        raise FormatError(f"policy {path} is not valid JSON ({e.msg})") from e
    if not isinstance(payload, dict) or payload.get("env") not in ENV_NAMES:
        raise FormatError("policy needs a known 'env'", field="env")
    for field in ("actions", "values"):
        if not isinstance(payload.get(field), dict):
            raise FormatError(f"policy '{field}' must be an object", field=field)

    space = enumerate_states(EnvSpec(payload["env"]))
    actions = np.zeros(len(space), dtype=np.int64)
    values = np.zeros(len(space))
    for i, state in enumerate(space.states):
        key = state_key(state)
        action = payload["actions"].get(key)
        if action not in ACTIONS:
            raise FormatError(f"policy has no valid action for state {key}", field="actions")
        actions[i] = ACTIONS.index(action)
        values[i] = float(payload["values"].get(key, 0.0))
    return TabularPolicy(
        space,
        actions,
        values,
        float(payload.get("gamma", DEFAULT_GAMMA)),
        str(payload.get("reward_source", "unknown")),
    )


# ===========================================
# TRANSFER
# ===========================================


@dataclass(frozen=True)
class OutputStats:
    """Mean model output at goal-reaching and other expert transitions."""

    env: EnvName
    goal_mean: Optional[float]
    non_goal_mean: Optional[float]
    goal_transitions: int
    non_goal_transitions: int

    def to_dict(self) -> OutputStatsPayload:
        return {
            "env": self.env,
            "goal_mean": self.goal_mean,
            "non_goal_mean": self.non_goal_mean,
            "goal_transitions": self.goal_transitions,
            "non_goal_transitions": self.non_goal_transitions,
        }


def output_stats(net: RewardNet, spec: EnvSpec, episodes: int, seed: int) -> OutputStats:
    """Model output on expert transitions of ``spec``, split by true reward."""
    xs, ys = encode_dataset(generate_dataset(spec, episodes, seed))
    preds = forward_batch(net, xs)
    goal = ys == 1.0
    return OutputStats(
        env=spec.name,
        goal_mean=float(preds[goal].mean()) if goal.any() else None,
        non_goal_mean=float(preds[~goal].mean()) if (~goal).any() else None,
        goal_transitions=int(goal.sum()),
        non_goal_transitions=int((~goal).sum()),
    )


def _shift(after: Optional[float], before: Optional[float]) -> Optional[float]:
    return None if after is None or before is None else after - before


@dataclass(frozen=True)
class TransferReport:
    """Output shift and planned-policy returns of a reward model in a new environment."""

    reward_source: str
    train: OutputStats
    eval: OutputStats
    model_policy_return: PolicyReturn
    true_policy_return: PolicyReturn
    random_policy_return: PolicyReturn

    @property
    def goal_shift(self) -> Optional[float]:
        return _shift(self.eval.goal_mean, self.train.goal_mean)

    @property
    def non_goal_shift(self) -> Optional[float]:
        return _shift(self.eval.non_goal_mean, self.train.non_goal_mean)

    def to_dict(self) -> TransferReportPayload:
        return {
            "reward_source": self.reward_source,
            "train": self.train.to_dict(),
            "eval": self.eval.to_dict(),
            "goal_shift": self.goal_shift,
            "non_goal_shift": self.non_goal_shift,
            "model_policy_return": self.model_policy_return.to_dict(),
            "true_policy_return": self.true_policy_return.to_dict(),
            "random_policy_return": self.random_policy_return.to_dict(),
            "note": TRANSFER_NOTE,
        }


def transfer_experiment(
    net: RewardNet,
    train_spec: EnvSpec,
    eval_spec: EnvSpec,
    episodes: int = DEFAULT_EVAL_EPISODES,
    seed: int = 0,
    gamma: float = DEFAULT_GAMMA,
) -> TransferReport:
    """
    Move a reward model from ``train_spec`` to ``eval_spec``.

    Reports (a) the model's mean output at goal and non-goal expert
    transitions in both environments and (b) the true return on
    ``eval_spec`` of policies planned under the model, under the true
    reward, and of a random policy.

    Args:
        net: Reward model
        train_spec: Environment the model was trained on
        eval_spec: Shifted environment
        episodes: Episodes for output statistics and for each evaluation
        seed: Base seed for both
        gamma: Planning discount

    Returns:
        The transfer report
    """
    source = ModelReward(net)
    space = enumerate_states(eval_spec)
    model_policy = value_iteration(space, source, gamma)
    true_policy = value_iteration(space, TrueReward(), gamma)
    report = TransferReport(
        reward_source=source.tag,
        train=output_stats(net, train_spec, episodes, seed),
        eval=output_stats(net, eval_spec, episodes, seed),
        model_policy_return=evaluate_policy(model_policy, eval_spec, episodes, seed),
        true_policy_return=evaluate_policy(true_policy, eval_spec, episodes, seed),
        random_policy_return=evaluate_random_policy(eval_spec, episodes, seed),
    )
    logger.info(
        "transfer %s -> %s: model policy %.3f, true policy %.3f",
        train_spec.name,
        eval_spec.name,
        report.model_policy_return.mean,
        report.true_policy_return.mean,
    )
    return report
