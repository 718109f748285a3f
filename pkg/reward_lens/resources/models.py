"""
Models resource for the reward-lens client.

The service holds one active model at a time.
"""

from typing import TYPE_CHECKING

from reward_lens.types import ModelResponse

if TYPE_CHECKING:
    from reward_lens.client import RewardLensClient


class ModelsResource:
    """
    Models resource.

    Example:
        >>> client = RewardLensClient()
        >>> client.models.load("/data/quirk.json")["checkpoint"]
        'sha256:...'
    """

    def __init__(self, client: "RewardLensClient"):
        self._client = client

    def get(self) -> ModelResponse:
        """
        Get the active checkpoint id.

        Returns:
            ``{"checkpoint": id}``, with ``None`` when nothing is loaded
        """
        return self._client.get("/api/model")  # type: ignore

    def load(self, path: str) -> ModelResponse:
        """
        Load a checkpoint and make it the active model.

        Args:
            path: Checkpoint path on the server (relative paths honour
                REWARD_LENS_DATA there)

        Returns:
            The new checkpoint id
        """
        return self._client.post("/api/model/load", json={"path": path})  # type: ignore
