"""
reward-lens - train small reward models on gridworld transitions and audit them

Example usage:
    from reward_lens import EnvSpec, generate_dataset, train_reward_model, gradient_saliency

    data = generate_dataset(EnvSpec("coinflip"), episodes=2000, seed=0)
    net, report = train_reward_model(data)
    print(report.validation_mse)

    # Where does the model look?
    pair = gradient_saliency(net, data[0])
    print(pair.mass_ratio)
"""

from reward_lens.client import RewardLensApiError, RewardLensClient
from reward_lens.counterfactual import (
    Edit,
    Expectation,
    GridBase,
    SampleBase,
    Scenario,
    ScenarioReport,
    apply_edits,
    load_fixture,
    load_scenario,
    reward_timeseries,
    run_scenario,
    save_scenario,
)
from reward_lens.errors import (
    FormatError,
    NoModelLoadedError,
    RewardLensError,
    ShapeError,
    UsageError,
)
from reward_lens.gridworld import (
    EnvSpec,
    EnvState,
    Transition,
    encode_transition,
    expert_action,
    generate_dataset,
    load_dataset,
    render,
    reset,
    rollout,
    sample_transition,
    save_dataset,
    step,
    true_reward,
)
from reward_lens.interpret import (
    OcclusionConfig,
    SaliencyPair,
    gaussian_blur,
    gradient_saliency,
    mass_ratio,
    mean_mass_ratio,
    occlusion_map,
    render_heatmap,
)
from reward_lens.policy_eval import (
    ModelReward,
    ScaledReward,
    StateSpace,
    TabularPolicy,
    TransferReport,
    TrueReward,
    enumerate_states,
    evaluate_policy,
    evaluate_random_policy,
    transfer_experiment,
    value_iteration,
)
from reward_lens.reward_learning import (
    TrainConfig,
    TrainReport,
    checkpoint_id,
    load_checkpoint,
    make_quirk_oracle,
    make_score_oracle,
    save_checkpoint,
    train_reward_model,
)
from reward_lens.tensor_core import (
    Layer,
    OptimizerState,
    RewardNet,
    forward,
    forward_batch,
    init_net,
    input_gradient,
    make_optimizer,
    train_step,
)

__version__ = "0.1.0"
__all__ = [
    # Client
    "RewardLensClient",
    "RewardLensApiError",
    # Errors
    "RewardLensError",
    "UsageError",
    "ShapeError",
    "FormatError",
    "NoModelLoadedError",
    # Networks
    "Layer",
    "RewardNet",
    "OptimizerState",
    "init_net",
    "forward",
    "forward_batch",
    "input_gradient",
    "make_optimizer",
    "train_step",
    # Environments
    "EnvSpec",
    "EnvState",
    "Transition",
    "reset",
    "step",
    "render",
    "encode_transition",
    "true_reward",
    "expert_action",
    "rollout",
    "generate_dataset",
    "sample_transition",
    "save_dataset",
    "load_dataset",
    # Reward learning
    "TrainConfig",
    "TrainReport",
    "train_reward_model",
    "make_quirk_oracle",
    "make_score_oracle",
    "save_checkpoint",
    "load_checkpoint",
    "checkpoint_id",
    # Saliency
    "OcclusionConfig",
    "SaliencyPair",
    "gradient_saliency",
    "occlusion_map",
    "gaussian_blur",
    "mass_ratio",
    "mean_mass_ratio",
    "render_heatmap",
    # Counterfactuals
    "Edit",
    "Expectation",
    "SampleBase",
    "GridBase",
    "Scenario",
    "ScenarioReport",
    "apply_edits",
    "run_scenario",
    "reward_timeseries",
    "load_scenario",
    "save_scenario",
    "load_fixture",
    # Planning
    "StateSpace",
    "TabularPolicy",
    "TrueReward",
    "ModelReward",
    "ScaledReward",
    "TransferReport",
    "enumerate_states",
    "value_iteration",
    "evaluate_policy",
    "evaluate_random_policy",
    "transfer_experiment",
]
