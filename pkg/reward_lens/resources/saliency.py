"""Saliency resource for the reward-lens client."""

from typing import TYPE_CHECKING, Any, Dict, Optional

from reward_lens.resources._frames import frames_body
from reward_lens.types import OcclusionDifference, SaliencyPayload

if TYPE_CHECKING:
    from reward_lens.client import RewardLensClient


class SaliencyResource:
    """
    Saliency resource.

    Example:
        >>> result = client.saliency.occlusion(s, sp, sigma_mask=0.5)
        >>> result["mass_ratio"]
    """

    def __init__(self, client: "RewardLensClient"):
        self._client = client

    def gradient(self, s: Any, sp: Any, signed: bool = False) -> SaliencyPayload:
        """
        Gradient saliency of the active model.

        Args:
            s: Current frame
            sp: Next frame
            signed: Keep gradient signs instead of magnitudes

        Returns:
            Maps over both frames and their mass ratio
        """
        data = frames_body(s, sp)
        if signed:
            data["signed"] = True
        return self._client.post("/api/saliency/gradient", json=data)  # type: ignore

    def occlusion(
        self,
        s: Any,
        sp: Any,
        sigma_blur: Optional[float] = None,
        sigma_mask: Optional[float] = None,
        stride: Optional[int] = None,
        difference: Optional[OcclusionDifference] = None,
    ) -> SaliencyPayload:
        """
        Occlusion saliency of the active model.

        Settings left as None use the service defaults.

        Returns:
            Maps over both frames and their mass ratio
        """
        overrides: Dict[str, Any] = {
            "sigma_blur": sigma_blur,
            "sigma_mask": sigma_mask,
            "stride": stride,
            "difference": difference,
        }
        # Remove None values
        overrides = {k: v for k, v in overrides.items() if v is not None}
        data = frames_body(s, sp)
        if overrides:
            data["occlusion"] = overrides
        return self._client.post("/api/saliency/occlusion", json=data)  # type: ignore
