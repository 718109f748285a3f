"""
Evaluation shared by the CLI and the HTTP service.

Both surfaces parse grid pairs, compute rewards, saliency and scenario
reports through these functions, so a service response and the JSON a CLI
subcommand writes for the same inputs are identical.
"""

from typing import Any, Dict, List, Optional, Tuple

from reward_lens.counterfactual import Scenario, run_scenario, scenario_from_dict
from reward_lens.errors import FormatError, UsageError
from reward_lens.gridworld import Grid, Transition, as_grid, encode_transition
from reward_lens.interpret import OcclusionConfig, SaliencyPair, gradient_saliency, occlusion_map
from reward_lens.tensor_core import RewardNet, forward
from reward_lens.types import (
    OcclusionOverrides,
    RewardResponse,
    SaliencyMethod,
    SaliencyPayload,
    ScenarioReportPayload,
)

OVERRIDE_KEYS = ("sigma_blur", "sigma_mask", "stride", "difference")


def grids_from_body(body: Any) -> Tuple[Grid, Grid]:
    """
    Frames of a ``{"s": ..., "sp": ...}`` document.

    Grids may be nested 11x11 rows or flat 121-value lists, so transition
    records are accepted as well.

    Raises:
        FormatError: Naming the missing or malformed frame
    """
    if not isinstance(body, dict):
        raise FormatError("body must be a JSON object")
    frames: List[Grid] = []
    for key in ("s", "sp"):
        if key not in body:
            raise FormatError(f"body is missing '{key}'", field=key)
        try:
            frames.append(as_grid(body[key], key))
        except (UsageError, ValueError, TypeError) as e:
            raise FormatError(f"bad grid '{key}': {e}", field=key) from e
    return frames[0], frames[1]


def transition_from_frames(s: Grid, s_prime: Grid) -> Transition:
    """Wrap a hand-made frame pair; reward models read only the frames."""
    return Transition(s=s, action="up", s_prime=s_prime, reward=0.0, done=False)


def occlusion_overrides(raw: Any) -> OcclusionOverrides:
    """
    Pick the occlusion settings out of a request body.

    Raises:
        FormatError: If an override has the wrong type
    """
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise FormatError("occlusion overrides must be an object", field="occlusion")
    overrides: Dict[str, Any] = {}
    for key in OVERRIDE_KEYS:
        if key not in raw:
            continue
        value = raw[key]
        if key == "difference":
            ok = isinstance(value, str)
        elif key == "stride":
            ok = isinstance(value, int) and not isinstance(value, bool)
        else:
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        if not ok:
            raise FormatError(f"occlusion override '{key}' has the wrong type", field=key)
        overrides[key] = value
    return overrides  # type: ignore[return-value]


def reward_payload(net: RewardNet, checkpoint: str, s: Grid, s_prime: Grid) -> RewardResponse:
    """``forward`` on the encoded pair, tagged with the checkpoint id."""
    return {"reward": forward(net, encode_transition(s, s_prime)), "checkpoint": checkpoint}


def compute_saliency(
    net: RewardNet,
    t: Transition,
    method: SaliencyMethod,
    occlusion: Optional[OcclusionConfig] = None,
    signed: bool = False,
) -> SaliencyPair:
    """Gradient or occlusion maps for one transition."""
    if method == "gradient":
        return gradient_saliency(net, t, signed=signed)
    return occlusion_map(net, t, occlusion or OcclusionConfig())


def saliency_payload(
    net: RewardNet,
    checkpoint: str,
    t: Transition,
    method: SaliencyMethod,
    occlusion: Optional[OcclusionConfig] = None,
    signed: bool = False,
) -> SaliencyPayload:
    """Saliency document for one transition, tagged with the checkpoint id."""
    return compute_saliency(net, t, method, occlusion, signed).to_dict(checkpoint)


def scenario_payload(net: RewardNet, checkpoint: str, sc: Scenario) -> ScenarioReportPayload:
    """Scenario report tagged with the checkpoint id."""
    payload = run_scenario(net, sc).to_dict()
    payload["checkpoint"] = checkpoint
    return payload


def scenario_payload_from_body(
    net: RewardNet, checkpoint: str, body: Any
) -> ScenarioReportPayload:
    """Parse a scenario document and run it."""
    return scenario_payload(net, checkpoint, scenario_from_dict(body))
