"""Environments resource for the reward-lens client."""

from typing import TYPE_CHECKING

from reward_lens.types import EnvListResponse, EnvName, TransitionRecord

if TYPE_CHECKING:
    from reward_lens.client import RewardLensClient


class EnvsResource:
    def __init__(self, client: "RewardLensClient"):
        self._client = client

    def list(self) -> EnvListResponse:
        """List the environments the service can sample from."""
        return self._client.get("/api/envs")  # type: ignore

    def sample(self, env: EnvName, seed: int = 0, step: int = 0) -> TransitionRecord:
        """
        Fetch one expert transition.

        Args:
            env: Environment name
            seed: Episode seed
            step: Step index within the episode

        Returns:
            Transition record with flat ``s`` and ``sp`` grids
        """
        data = {"env": env, "seed": seed, "step": step}
        return self._client.post("/api/env/sample", json=data)  # type: ignore
