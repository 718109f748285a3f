"""
Reward model training, hand-built oracle models, and checkpoint files.

Models are trained by regression (MSE) on ground-truth rewards of expert
transitions. The two oracles are networks with hand-set weights that
compute, exactly, the shortcut algorithms a regressed model can converge to:

- quirk oracle: ``1 - (number of goal cells visible in s')``
- score oracle: ``sum over strip cells of relu(x'_j - x_j)``
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Hashable, List, Sequence, Tuple, Union

import numpy as np

from reward_lens.errors import FormatError, UsageError
from reward_lens.gridworld import CELLS, GRID_SIZE, STRIP_ROW, Transition, encode_transition
from reward_lens.tensor_core import (
    ACTIVATIONS,
    SEED_MASK,
    Layer,
    RewardNet,
    Tensor,
    forward_batch,
    init_net,
    make_optimizer,
    seeded_rng,
    train_step_arrays,
)
from reward_lens.types import BalancePayload, CheckpointPayload, LayerPayload, TrainReportPayload

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "reward-lens/v1"
GRID_INPUT_DIM = 2 * CELLS

DEFAULT_HIDDEN = (64, 64)
DEFAULT_EPOCHS = 20
DEFAULT_BATCH_SIZE = 64
DEFAULT_POSITIVE_FRACTION = 0.25
DEFAULT_VALIDATION_FRACTION = 0.1
ACCURACY_THRESHOLD = 0.5


@dataclass(frozen=True)
class TrainConfig:
    """
    Training hyperparameters.

    ``positive_fraction``: reward-1 transitions are duplicated until they make
    up at least this share of the training set.
    """

    hidden: Tuple[int, ...] = DEFAULT_HIDDEN
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    learning_rate: float = 1e-3
    positive_fraction: float = DEFAULT_POSITIVE_FRACTION
    seed: int = 1
    validation_fraction: float = DEFAULT_VALIDATION_FRACTION

    def __post_init__(self) -> None:
        if any(width < 1 for width in self.hidden):
            raise UsageError(f"hidden widths must be positive, got {list(self.hidden)}")
        if self.epochs < 1 or self.batch_size < 1:
            raise UsageError("epochs and batch_size must be positive")
        if self.learning_rate <= 0:
            raise UsageError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 < self.positive_fraction < 1.0:
            raise UsageError(f"positive_fraction must be in (0, 1), got {self.positive_fraction}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise UsageError(
                f"validation_fraction must be in (0, 1), got {self.validation_fraction}"
            )


@dataclass
class TrainReport:
    """Per-epoch training loss, held-out metrics and dataset balance."""

    epoch_mse: List[float]
    validation_mse: float
    validation_accuracy: float
    balance: BalancePayload

    def to_dict(self) -> TrainReportPayload:
        return {
            "epoch_mse": list(self.epoch_mse),
            "validation_mse": self.validation_mse,
            "validation_accuracy": self.validation_accuracy,
            "balance": self.balance,
        }


# ===========================================
# DATA PREPARATION
# ===========================================


def encode_dataset(transitions: Sequence[Transition]) -> Tuple[Tensor, Tensor]:
    """Stack transitions into ``(n, 242)`` inputs and ``(n,)`` targets."""
    if not transitions:
        return np.zeros((0, GRID_INPUT_DIM)), np.zeros(0)
    xs = np.stack([encode_transition(t.s, t.s_prime) for t in transitions])
    ys = np.asarray([t.reward for t in transitions], dtype=np.float64)
    return xs, ys


def _episode_keys(transitions: Sequence[Transition]) -> List[Hashable]:
    """Episode identity of each transition (from meta, else from done boundaries)."""
    keys: List[Hashable] = []
    run = 0
    for t in transitions:
        if t.meta is not None:
            keys.append((t.meta["env"], t.meta["episode"]))
        else:
            keys.append(("run", run))
            if t.done:
                run += 1
    return keys


def split_by_episode(
    transitions: Sequence[Transition], validation_fraction: float, seed: int
) -> Tuple[List[Transition], List[Transition]]:
    """
    Hold out whole episodes for validation.

    Raises:
        UsageError: If there are fewer than two episodes
    """
    keys = _episode_keys(transitions)
    episodes = list(dict.fromkeys(keys))
    if len(episodes) < 2:
        raise UsageError("Training needs at least two episodes to hold one out")
    rng = seeded_rng(seed)
    order = rng.permutation(len(episodes))
    n_val = min(len(episodes) - 1, max(1, round(validation_fraction * len(episodes))))
    held_out = {episodes[i] for i in order[:n_val]}
    train = [t for t, k in zip(transitions, keys) if k not in held_out]
    validation = [t for t, k in zip(transitions, keys) if k in held_out]
    return train, validation


def oversample_positives(
    xs: Tensor, ys: Tensor, target_fraction: float
) -> Tuple[Tensor, Tensor, int]:
    """
    Repeat reward-1 rows until they are at least ``target_fraction`` of the set.

    Labels are never changed, only how often each row appears.

    Returns:
        ``(xs, ys, factor)`` where ``factor`` is the number of copies of each positive
    """
    positive = ys >= ACCURACY_THRESHOLD
    n_pos = int(positive.sum())
    n_neg = len(ys) - n_pos
    if n_pos == 0:
        return xs, ys, 1
    factor = max(1, math.ceil(target_fraction * n_neg / ((1.0 - target_fraction) * n_pos)))
    if factor == 1:
        return xs, ys, 1
    extra = np.repeat(np.flatnonzero(positive), factor - 1)
    return np.concatenate([xs, xs[extra]]), np.concatenate([ys, ys[extra]]), factor


# ===========================================
# TRAINING
# ===========================================


def evaluate_model(net: RewardNet, transitions: Sequence[Transition]) -> Tuple[float, float]:
    """
    Score a model on labeled transitions.

    Returns:
        ``(mse, accuracy)`` with accuracy measured at threshold 0.5
    """
    xs, ys = encode_dataset(transitions)
    if len(ys) == 0:
        raise UsageError("evaluate_model needs at least one transition")
    preds = forward_batch(net, xs)
    err = preds - ys
    accuracy = float(np.mean((preds >= ACCURACY_THRESHOLD) == (ys >= ACCURACY_THRESHOLD)))
    return float(np.mean(err * err)), accuracy


def train_reward_model(
    dataset: Sequence[Transition], config: TrainConfig = TrainConfig()
) -> Tuple[RewardNet, TrainReport]:
    """
    Regress a reward model on ground-truth labels.

    Inputs are ``concat(flatten(s), flatten(s'))``. Episodes are split into
    train and validation sets, positives are oversampled, and the network is
    trained with Adam on minibatch MSE. Everything random derives from
    ``config.seed``.

    Args:
        dataset: Labeled transitions, typically from ``generate_dataset``
        config: Training hyperparameters

    Returns:
        The trained network and its report

    Raises:
        UsageError: If the dataset is empty or has only one label
    """
    if not dataset:
        raise UsageError("Cannot train on an empty dataset")
    labels = np.asarray([t.reward for t in dataset])
    if not (labels >= ACCURACY_THRESHOLD).any() or (labels >= ACCURACY_THRESHOLD).all():
        raise UsageError("Dataset has a single reward class; regression would be degenerate")

    split_seq, init_seq, shuffle_seq = np.random.SeedSequence(config.seed & SEED_MASK).spawn(3)
    train, validation = split_by_episode(
        dataset, config.validation_fraction, int(split_seq.generate_state(1)[0])
    )
    xs, ys = encode_dataset(train)
    n_pos = int((ys >= ACCURACY_THRESHOLD).sum())
    xs, ys, factor = oversample_positives(xs, ys, config.positive_fraction)

    net = init_net(
        [GRID_INPUT_DIM, *config.hidden, 1], seed=int(init_seq.generate_state(1)[0])
    )
    opt = make_optimizer(net, "adam", learning_rate=config.learning_rate)
    rng = np.random.Generator(np.random.PCG64(shuffle_seq))

    epoch_mse: List[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(ys))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            total += train_step_arrays(net, xs[idx], ys[idx], opt) * len(idx)
        epoch_mse.append(total / len(ys))
        logger.info("epoch %d/%d train mse %.6f", epoch + 1, config.epochs, epoch_mse[-1])

    val_mse, val_accuracy = evaluate_model(net, validation)
    balance: BalancePayload = {
        "train_transitions": len(train),
        "validation_transitions": len(validation),
        "train_episodes": len(set(_episode_keys(train))),
        "validation_episodes": len(set(_episode_keys(validation))),
        "positives": n_pos,
        "negatives": len(train) - n_pos,
        "oversample_factor": factor,
        "positive_fraction_after": float(np.mean(ys >= ACCURACY_THRESHOLD)),
    }
    logger.info("validation mse %.6f accuracy %.4f", val_mse, val_accuracy)
    return net, TrainReport(epoch_mse, val_mse, val_accuracy, balance)


# ===========================================
# ORACLES
# ===========================================


def make_quirk_oracle() -> RewardNet:
    """
    Network computing ``1 - (number of goal cells visible in s')``.

    Each s' cell feeds three ReLU units whose combination
    ``hat(x) = relu(4x-1) - 2 relu(4x-2) + relu(4x-3)`` is 1 at 0.5 (goal)
    and 0 at 0, 0.75 and 1.0. All weights on s are zero.
    """
    hidden = 3 * CELLS
    weights = np.zeros((hidden, GRID_INPUT_DIM))
    biases = np.zeros(hidden)
    out = np.zeros((1, hidden))
    for j in range(CELLS):
        for k, coefficient in enumerate((-1.0, 2.0, -1.0)):
            unit = 3 * j + k
            weights[unit, CELLS + j] = 4.0
            biases[unit] = -float(k + 1)
            out[0, unit] = coefficient
    return RewardNet(
        input_dim=GRID_INPUT_DIM,
        layers=[Layer(weights, biases, "relu"), Layer(out, np.array([1.0]), "linear")],
    )


def make_score_oracle() -> RewardNet:
    """
    Network computing ``sum_j relu(x'_j - x_j)`` over the 11 score-strip cells.

    It predicts reward purely from strip cells that light up between s and s'.
    """
    weights = np.zeros((GRID_SIZE, GRID_INPUT_DIM))
    for col in range(GRID_SIZE):
        cell = STRIP_ROW * GRID_SIZE + col
        weights[col, CELLS + cell] = 1.0
        weights[col, cell] = -1.0
    return RewardNet(
        input_dim=GRID_INPUT_DIM,
        layers=[
            Layer(weights, np.zeros(GRID_SIZE), "relu"),
            Layer(np.ones((1, GRID_SIZE)), np.zeros(1), "linear"),
        ],
    )


# ===========================================
# CHECKPOINTS
# ===========================================


def net_to_payload(net: RewardNet) -> CheckpointPayload:
    """Checkpoint document for ``net``."""
    layers: List[LayerPayload] = [
        {"w": layer.weights.tolist(), "b": layer.biases.tolist(), "act": layer.activation}
        for layer in net.layers
    ]
    return {"format": CHECKPOINT_FORMAT, "input_dim": net.input_dim, "layers": layers}


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def net_from_payload(payload: Any) -> RewardNet:
    """
    Rebuild a network from a checkpoint document.

    Raises:
        FormatError: Naming the offending field (and layer index)
    """
    if not isinstance(payload, dict):
        raise FormatError("checkpoint must be a JSON object")
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(
            f"unsupported checkpoint format {payload.get('format')!r}, "
            f"expected {CHECKPOINT_FORMAT!r}",
            field="format",
        )
    input_dim = payload.get("input_dim")
    if not isinstance(input_dim, int) or isinstance(input_dim, bool) or input_dim < 1:
        raise FormatError("input_dim must be a positive integer", field="input_dim")
    raw_layers = payload.get("layers")
    if not isinstance(raw_layers, list) or not raw_layers:
        raise FormatError("layers must be a nonempty list", field="layers")

    layers: List[Layer] = []
    expected = input_dim
    for index, raw in enumerate(raw_layers):
        where = f"layers[{index}]"
        if not isinstance(raw, dict):
            raise FormatError(f"layer {index} must be an object", field=where)
        w, b, act = raw.get("w"), raw.get("b"), raw.get("act")
        if act not in ACTIVATIONS:
            raise FormatError(f"layer {index}: unknown activation {act!r}", field=f"{where}.act")
        if (
            not isinstance(w, list)
            or not w
            or not all(isinstance(row, list) and all(_is_number(v) for v in row) for row in w)
        ):
            raise FormatError(f"layer {index}: w must be a matrix of numbers", field=f"{where}.w")
        widths = {len(row) for row in w}
        if len(widths) != 1:
            raise FormatError(f"layer {index}: w rows have unequal lengths", field=f"{where}.w")
        in_dim = widths.pop()
        if in_dim != expected:
            raise FormatError(
                f"layer {index}: input dim {in_dim} does not match expected {expected}",
                field=f"{where}.w",
            )
        if not isinstance(b, list) or len(b) != len(w) or not all(_is_number(v) for v in b):
            raise FormatError(
                f"layer {index}: b must hold {len(w)} numbers", field=f"{where}.b"
            )
        layers.append(Layer(np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64), act))
        expected = len(w)

    if expected != 1 or layers[-1].activation != "linear":
        raise FormatError(
            f"layer {len(layers) - 1}: final layer must be linear with one output",
            field=f"layers[{len(layers) - 1}]",
        )
    return RewardNet(input_dim=input_dim, layers=layers)


def save_checkpoint(net: RewardNet, path: Union[str, Path]) -> None:
    """Write ``net`` to ``path`` with full float precision."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(net_to_payload(net), fh)


def load_checkpoint(path: Union[str, Path]) -> RewardNet:
    """
    Read a checkpoint written by ``save_checkpoint``.

    Raises:
        FormatError: If the file is missing, not JSON, or inconsistent
    """
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as e:
        raise FormatError(f"cannot read checkpoint {path}: {e.strerror}", field="path") from e
    except json.JSONDecodeError as e:
        raise FormatError(f"checkpoint {path} is not valid JSON ({e.msg})") from e
    return net_from_payload(payload)


def checkpoint_id(net: RewardNet) -> str:
    """Content hash identifying a network's weights."""
    canonical = json.dumps(net_to_payload(net), sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
