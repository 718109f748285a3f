"""Scenarios resource for the reward-lens client."""

from typing import TYPE_CHECKING, Any, Dict, Mapping, Union

from reward_lens.counterfactual import Scenario, scenario_to_dict
from reward_lens.types import ScenarioReportPayload

if TYPE_CHECKING:
    from reward_lens.client import RewardLensClient


class ScenariosResource:
    def __init__(self, client: "RewardLensClient"):
        self._client = client

    def run(self, scenario: Union[Scenario, Mapping[str, Any]]) -> ScenarioReportPayload:
        """
        Run a counterfactual scenario against the active model.

        Args:
            scenario: A Scenario or a scenario document

        Returns:
            Base and counterfactual rewards, their delta and the verdict
        """
        if isinstance(scenario, Scenario):
            data: Dict[str, Any] = dict(scenario_to_dict(scenario))
        else:
            data = dict(scenario)
        return self._client.post("/api/scenario", json=data)  # type: ignore
