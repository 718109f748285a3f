"""
Hand-crafted counterfactual scenarios and reward time series.

A scenario names a base transition (an expert-episode step or two explicit
grids), a list of cell edits for each frame, and optionally an expectation on
the reward of the edited transition. Scenario files are JSON:

    {
      "name": "goal removed",
      "base": {"env": "coinflip", "seed": 3, "step": 0},
      "edits_s": [{"row": 0, "col": 0, "value": 0.0}],
      "edits_sp": [{"row": 0, "col": 0, "value": 0.0}],
      "expect": {"op": "≈", "value": 1.0, "tol": 1e-9}
    }
"""

import csv
import json
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from reward_lens.errors import FormatError, UsageError
from reward_lens.gridworld import (
    ENV_NAMES,
    GRID_SIZE,
    EnvSpec,
    Grid,
    as_grid,
    encode_transition,
    expert_action,
    reset,
    rollout,
    sample_transition,
)
from reward_lens.tensor_core import RewardNet, forward
from reward_lens.types import (
    Comparator,
    EditPayload,
    ScenarioPayload,
    ScenarioReportPayload,
    Verdict,
)

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-6

COMPARATOR_ALIASES: Dict[str, Comparator] = {
    "<": "<",
    "<=": "<=",
    "≤": "<=",
    ">": ">",
    ">=": ">=",
    "≥": ">=",
    "≈": "≈",
    "~=": "≈",
}

TIMESERIES_HEADER = ("step", "predicted", "true")

FIXTURES = ("goal_removed", "covered_goal", "many_goals")


@dataclass(frozen=True)
class Edit:
    """Set cell ``(row, col)`` to ``value``."""

    row: int
    col: int
    value: float

    def __post_init__(self) -> None:
        if not (0 <= self.row < GRID_SIZE and 0 <= self.col < GRID_SIZE):
            raise UsageError(f"edit coordinate ({self.row}, {self.col}) is outside the grid")
        if not 0.0 <= self.value <= 1.0:
            raise UsageError(f"edit value {self.value} is outside [0, 1]")


@dataclass(frozen=True)
class SampleBase:
    """Step ``step`` of the expert episode of ``env`` reset with ``seed``."""

    env: str
    seed: int
    step: int


@dataclass(frozen=True, eq=False)
class GridBase:
    """Explicit frames."""

    s: Grid
    s_prime: Grid


@dataclass(frozen=True)
class Expectation:
    """Expected relation between the counterfactual reward and ``value``."""

    comparator: Comparator
    value: float
    tolerance: float = DEFAULT_TOLERANCE

    def check(self, reward: float) -> bool:
        if self.comparator == "<":
            return reward < self.value
        if self.comparator == "<=":
            return reward <= self.value
        if self.comparator == ">":
            return reward > self.value
        if self.comparator == ">=":
            return reward >= self.value
        return abs(reward - self.value) <= self.tolerance


@dataclass(frozen=True)
class Scenario:
    base: Union[SampleBase, GridBase]
    edits_s: Tuple[Edit, ...] = ()
    edits_sp: Tuple[Edit, ...] = ()
    expectation: Optional[Expectation] = None
    name: str = ""


@dataclass(frozen=True)
class ScenarioReport:
    base_reward: float
    counterfactual_reward: float
    verdict: Optional[Verdict] = None
    name: str = ""

    @property
    def delta(self) -> float:
        return self.counterfactual_reward - self.base_reward

    def to_dict(self) -> ScenarioReportPayload:
        payload: ScenarioReportPayload = {
            "base_reward": self.base_reward,
            "counterfactual_reward": self.counterfactual_reward,
            "delta": self.delta,
            "verdict": self.verdict,
        }
        if self.name:
            payload["name"] = self.name
        return payload


# ===========================================
# OPERATIONS
# ===========================================


def apply_edits(grid: Grid, edits: Sequence[Edit]) -> Grid:
    """
    Copy of ``grid`` with ``edits`` applied in order (later edits win).

    Raises:
        UsageError: If an edit is out of range
    """
    out = as_grid(grid)
    for edit in edits:
        if not isinstance(edit, Edit):
            edit = Edit(*edit)
        out[edit.row, edit.col] = edit.value
    return out


def resolve_base(base: Union[SampleBase, GridBase]) -> Tuple[Grid, Grid]:
    """
    Frames of a scenario base.

    Raises:
        FormatError: If the environment, seed or step does not name a transition
    """
    if isinstance(base, GridBase):
        return as_grid(base.s, "s"), as_grid(base.s_prime, "s'")
    try:
        t = sample_transition(EnvSpec(base.env), base.seed, base.step)  # type: ignore[arg-type]
    except UsageError as e:
        raise FormatError(f"unresolvable scenario base: {e.message}", field="base") from e
    return t.s, t.s_prime


def run_scenario(net: RewardNet, sc: Scenario) -> ScenarioReport:
    """
    Evaluate ``net`` on a scenario's base and edited transitions.

    Returns:
        Both rewards, their difference, and the expectation verdict if any
    """
    s, s_prime = resolve_base(sc.base)
    base_reward = forward(net, encode_transition(s, s_prime))
    counterfactual = forward(
        net, encode_transition(apply_edits(s, sc.edits_s), apply_edits(s_prime, sc.edits_sp))
    )
    verdict: Optional[Verdict] = None
    if sc.expectation is not None:
        verdict = "pass" if sc.expectation.check(counterfactual) else "fail"
    logger.debug("scenario %r: base %r counterfactual %r", sc.name, base_reward, counterfactual)
    return ScenarioReport(base_reward, counterfactual, verdict, sc.name)


@dataclass(frozen=True)
class TimeseriesPoint:
    step: int
    predicted: float
    true: float


def reward_timeseries(net: RewardNet, spec: EnvSpec, episode_seed: int) -> List[TimeseriesPoint]:
    """Predicted and true reward at every step of one expert episode."""
    episode = rollout(reset(spec, episode_seed), expert_action)
    return [
        TimeseriesPoint(index, forward(net, encode_transition(t.s, t.s_prime)), t.reward)
        for index, t in enumerate(episode)
    ]


def write_timeseries_csv(points: Sequence[TimeseriesPoint], path: Union[str, Path]) -> None:
    """Write ``step,predicted,true`` rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TIMESERIES_HEADER)
        for point in points:
            writer.writerow([point.step, repr(point.predicted), repr(point.true)])


# ===========================================
# SCENARIO FILES
# ===========================================


def _parse_edits(raw: Any, field: str) -> Tuple[Edit, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise FormatError(f"{field} must be a list", field=field)
    edits: List[Edit] = []
    for index, item in enumerate(raw):
        try:
            edits.append(Edit(int(item["row"]), int(item["col"]), float(item["value"])))
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"{field}[{index}] is malformed: {e}", field=field) from e
        except UsageError as e:
            raise FormatError(f"{field}[{index}]: {e.message}", field=field) from e
    return tuple(edits)


def scenario_from_dict(payload: Any) -> Scenario:
    """
    Parse a scenario document.

    Raises:
        FormatError: Naming the malformed field
    """
    if not isinstance(payload, dict):
        raise FormatError("scenario must be a JSON object")
    base_raw = payload.get("base")
    if not isinstance(base_raw, dict):
        raise FormatError("scenario needs a 'base' object", field="base")

    base: Union[SampleBase, GridBase]
    if "env" in base_raw:
        if base_raw["env"] not in ENV_NAMES:
            raise FormatError(f"unknown environment {base_raw['env']!r}", field="base.env")
        try:
            base = SampleBase(
                str(base_raw["env"]), int(base_raw.get("seed", 0)), int(base_raw.get("step", 0))
            )
        except (TypeError, ValueError) as e:
            raise FormatError(f"scenario base is malformed: {e}", field="base") from e
    elif "s" in base_raw and "sp" in base_raw:
        try:
            base = GridBase(as_grid(base_raw["s"], "s"), as_grid(base_raw["sp"], "sp"))
        except (UsageError, TypeError, ValueError) as e:
            raise FormatError(f"scenario base grids are malformed: {e}", field="base") from e
    else:
        raise FormatError("scenario base needs env/seed/step or s/sp", field="base")

    expectation: Optional[Expectation] = None
    expect_raw = payload.get("expect")
    if expect_raw is not None:
        if not isinstance(expect_raw, dict) or expect_raw.get("op") not in COMPARATOR_ALIASES:
            raise FormatError(
                f"expect.op must be one of {sorted(COMPARATOR_ALIASES)}", field="expect.op"
            )
        try:
            expectation = Expectation(
                COMPARATOR_ALIASES[expect_raw["op"]],
                float(expect_raw["value"]),
                float(expect_raw.get("tol", DEFAULT_TOLERANCE)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"expect is malformed: {e}", field="expect") from e

    return Scenario(
        base=base,
        edits_s=_parse_edits(payload.get("edits_s"), "edits_s"),
        edits_sp=_parse_edits(payload.get("edits_sp"), "edits_sp"),
        expectation=expectation,
        name=str(payload.get("name", "")),
    )


def _edits_to_list(edits: Sequence[Edit]) -> List[EditPayload]:
    return [{"row": e.row, "col": e.col, "value": e.value} for e in edits]


def scenario_to_dict(sc: Scenario) -> ScenarioPayload:
    """Scenario document for ``sc``."""
    if isinstance(sc.base, GridBase):
        base: Dict[str, object] = {"s": sc.base.s.tolist(), "sp": sc.base.s_prime.tolist()}
    else:
        base = {"env": sc.base.env, "seed": sc.base.seed, "step": sc.base.step}
    payload: ScenarioPayload = {
        "base": base,
        "edits_s": _edits_to_list(sc.edits_s),
        "edits_sp": _edits_to_list(sc.edits_sp),
    }
    if sc.name:
        payload["name"] = sc.name
    if sc.expectation is not None:
        payload["expect"] = {
            "op": sc.expectation.comparator,
            "value": sc.expectation.value,
            "tol": sc.expectation.tolerance,
        }
    return payload


def load_scenario(path: Union[str, Path]) -> Scenario:
    """
    Read a scenario file.

    Raises:
        FormatError: If the file is missing, not JSON, or malformed
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise FormatError(f"cannot read scenario {path}: {e.strerror}", field="path") from e
    try:
        return scenario_from_dict(json.loads(text))
    except json.JSONDecodeError as e:
        raise FormatError(f"scenario {path} is not valid JSON ({e.msg})") from e


def save_scenario(sc: Scenario, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), ensure_ascii=False), encoding="utf-8")


def load_fixture(name: str) -> Scenario:
    """
    Shipped fixture scenarios.

    - ``goal_removed``: the goal is removed from both frames
    - ``covered_goal``: two goals, the agent covers one in s'
    - ``many_goals``: nine goals visible in s'
    """
    if name not in FIXTURES:
        raise UsageError(f"Unknown fixture '{name}'", details={"known": list(FIXTURES)})
    text = resources.files("reward_lens").joinpath(f"scenarios/{name}.json").read_text("utf-8")
    return scenario_from_dict(json.loads(text))
