"""Resource modules for the reward-lens client."""

from reward_lens.resources.envs import EnvsResource
from reward_lens.resources.models import ModelsResource
from reward_lens.resources.rewards import RewardsResource
from reward_lens.resources.saliency import SaliencyResource
from reward_lens.resources.scenarios import ScenariosResource

__all__ = [
    "EnvsResource",
    "ModelsResource",
    "RewardsResource",
    "SaliencyResource",
    "ScenariosResource",
]
