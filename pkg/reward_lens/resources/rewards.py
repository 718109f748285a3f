"""Rewards resource for the reward-lens client."""

from typing import TYPE_CHECKING, Any

from reward_lens.resources._frames import frames_body
from reward_lens.types import RewardResponse

if TYPE_CHECKING:
    from reward_lens.client import RewardLensClient


class RewardsResource:
    def __init__(self, client: "RewardLensClient"):
        self._client = client

    def evaluate(self, s: Any, sp: Any) -> RewardResponse:
        """
        Evaluate the active model on one frame pair.

        Args:
            s: 11x11 grid (array, nested rows or 121 flat values)
            sp: Next frame, same forms

        Returns:
            Reward and the checkpoint id it was computed with
        """
        return self._client.post("/api/reward", json=frames_body(s, sp))  # type: ignore
