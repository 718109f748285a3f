"""
Type definitions for reward-lens.

These types mirror the JSON files the toolkit reads and writes (datasets,
checkpoints, saliency maps, scenarios, policies, reports) and the bodies of
the HTTP API, so both sides of every boundary share one definition.
"""

from typing import Dict, List, Literal, Optional, TypedDict

from typing_extensions import NotRequired

# ===========================================
# PRIMITIVES
# ===========================================

Action = Literal["up", "down", "left", "right"]

EnvName = Literal["coinflip", "twogoals", "goaldestroyer", "scoregoal", "scoregoal_nostrip"]

Activation = Literal["relu", "linear"]

OptimizerKind = Literal["sgd", "adam"]

SaliencyMethod = Literal["gradient", "occlusion"]

OcclusionDifference = Literal["absolute", "squared"]

Comparator = Literal["<", "<=", ">", ">=", "≈"]

Verdict = Literal["pass", "fail"]

# Row-major 11x11 grid as nested lists
GridRows = List[List[float]]


# ===========================================
# DATASET TYPES
# ===========================================


class TransitionMeta(TypedDict):
    """Where a transition came from."""

    env: str
    episode: int
    t: int


class TransitionRecord(TypedDict):
    """One line of a JSON Lines dataset file."""

    s: List[float]  # 121 floats, row-major
    a: Action
    sp: List[float]  # 121 floats, row-major
    r: float
    done: bool
    meta: NotRequired[TransitionMeta]


# ===========================================
# CHECKPOINT TYPES
# ===========================================


class LayerPayload(TypedDict):
    """One dense layer of a checkpoint."""

    w: List[List[float]]  # (out, in) row-major rows
    b: List[float]
    act: Activation


class CheckpointPayload(TypedDict):
    """Reward network checkpoint file."""

    format: str  # always "reward-lens/v1"
    input_dim: int
    layers: List[LayerPayload]


# ===========================================
# TRAINING TYPES
# ===========================================


class BalancePayload(TypedDict):
    """Dataset balance statistics."""

    train_transitions: int
    validation_transitions: int
    train_episodes: int
    validation_episodes: int
    positives: int
    negatives: int
    oversample_factor: int
    positive_fraction_after: float


class TrainReportPayload(TypedDict):
    """Outcome of a training run."""

    epoch_mse: List[float]
    validation_mse: float
    validation_accuracy: float
    balance: BalancePayload


# ===========================================
# SALIENCY TYPES
# ===========================================


class SaliencyPayload(TypedDict):
    """Saliency maps over both frames of a transition."""

    method: SaliencyMethod
    map_s: GridRows
    map_sprime: GridRows
    mass_ratio: float
    checkpoint: NotRequired[str]


class HeatmapPayload(TypedDict):
    """JSON heatmap file."""

    shape: List[int]
    data: GridRows


class OcclusionOverrides(TypedDict, total=False):
    """Optional occlusion settings accepted by the HTTP API."""

    sigma_blur: float
    sigma_mask: float
    stride: int
    difference: OcclusionDifference


# ===========================================
# COUNTERFACTUAL TYPES
# ===========================================


class EditPayload(TypedDict):
    """Set one cell of a grid."""

    row: int
    col: int
    value: float


class SampleBasePayload(TypedDict):
    """Scenario base drawn from an expert episode."""

    env: EnvName
    seed: int
    step: int


class GridBasePayload(TypedDict):
    """Scenario base given as explicit grids."""

    s: GridRows
    sp: GridRows


class ExpectationPayload(TypedDict):
    """Expected counterfactual reward."""

    op: Comparator
    value: float
    tol: NotRequired[float]


class ScenarioPayload(TypedDict):
    """Scenario file."""

    name: NotRequired[str]
    base: Dict[str, object]  # SampleBasePayload or GridBasePayload
    edits_s: NotRequired[List[EditPayload]]
    edits_sp: NotRequired[List[EditPayload]]
    expect: NotRequired[Optional[ExpectationPayload]]


class ScenarioReportPayload(TypedDict):
    """Outcome of running a scenario."""

    name: NotRequired[str]
    base_reward: float
    counterfactual_reward: float
    delta: float
    verdict: Optional[Verdict]
    checkpoint: NotRequired[str]


# ===========================================
# PLANNING TYPES
# ===========================================


class PolicyPayload(TypedDict):
    """Policy file."""

    env: EnvName
    gamma: float
    actions: Dict[str, Action]
    values: Dict[str, float]
    reward_source: str


class ReturnPayload(TypedDict):
    """Mean true return of a policy."""

    mean: float
    stderr: float
    episodes: int


class OutputStatsPayload(TypedDict):
    """Mean model output at goal and non-goal transitions of one environment."""

    env: EnvName
    goal_mean: Optional[float]
    non_goal_mean: Optional[float]
    goal_transitions: int
    non_goal_transitions: int


class TransferReportPayload(TypedDict):
    """Outcome of a transfer experiment."""

    reward_source: str
    train: OutputStatsPayload
    eval: OutputStatsPayload
    goal_shift: Optional[float]
    non_goal_shift: Optional[float]
    model_policy_return: ReturnPayload
    true_policy_return: ReturnPayload
    random_policy_return: ReturnPayload
    note: str


# ===========================================
# HTTP API TYPES
# ===========================================


class EnvInfo(TypedDict):
    """Registered environment."""

    name: EnvName
    episode_cap: int


class EnvListResponse(TypedDict):
    envs: List[EnvInfo]


class RewardResponse(TypedDict):
    reward: float
    checkpoint: str


class ModelResponse(TypedDict):
    checkpoint: Optional[str]


class ErrorInfo(TypedDict):
    code: str
    message: str


class ErrorResponse(TypedDict):
    error: ErrorInfo
