"""
Dense feed-forward reward networks with exact reverse-mode gradients.

A RewardNet is a plain stack of affine layers with ReLU or linear
activations and a single linear output. Gradients are available with
respect to the inputs (for saliency) and to the parameters (for training).
All arithmetic is float64.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from reward_lens.errors import ShapeError, UsageError
from reward_lens.types import Activation, OptimizerKind

logger = logging.getLogger(__name__)

Tensor = npt.NDArray[np.float64]

DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999
DEFAULT_EPSILON = 1e-8

ACTIVATIONS = ("relu", "linear")

SEED_MASK = 2**64 - 1


@dataclass
class Layer:
    """One affine layer: ``act(weights @ x + biases)``."""

    weights: Tensor  # (out, in)
    biases: Tensor  # (out,)
    activation: Activation

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ShapeError("layer weights", "2-d matrix", f"{self.weights.ndim}-d array")
        if self.biases.shape != (self.weights.shape[0],):
            raise ShapeError("layer biases", (self.weights.shape[0],), self.biases.shape)
        if self.activation not in ACTIVATIONS:
            raise UsageError(f"Unknown activation '{self.activation}'")

    @property
    def in_dim(self) -> int:
        return int(self.weights.shape[1])

    @property
    def out_dim(self) -> int:
        return int(self.weights.shape[0])


@dataclass
class RewardNet:
    """
    Scalar-output MLP ``R(x)``.

    For gridworld models ``x`` is ``concat(flatten(s), flatten(s'))`` and
    ``input_dim`` is 242.

    Raises:
        ShapeError: If consecutive layer dimensions do not chain, or the
            final layer does not produce a single output.
    """

    input_dim: int
    layers: List[Layer]

    def __post_init__(self) -> None:
        if not self.layers:
            raise UsageError("A RewardNet needs at least one layer")
        expected = self.input_dim
        for index, layer in enumerate(self.layers):
            if layer.in_dim != expected:
                raise ShapeError(f"layer {index} input dim", expected, layer.in_dim)
            expected = layer.out_dim
        last = self.layers[-1]
        if last.out_dim != 1:
            raise ShapeError("final layer output dim", 1, last.out_dim)
        if last.activation != "linear":
            raise UsageError("The final layer must use the linear activation")

    @property
    def arch(self) -> List[int]:
        return [self.input_dim] + [layer.out_dim for layer in self.layers]

    def __call__(self, x: npt.ArrayLike) -> float:
        return forward(self, x)


@dataclass
class OptimizerState:
    """
    Optimizer hyperparameters and per-parameter accumulators.

    ``first_moments`` and ``second_moments`` mirror ``parameters(net)``
    one-for-one; they stay empty for sgd.
    """

    kind: OptimizerKind
    learning_rate: float = DEFAULT_LEARNING_RATE
    beta1: float = DEFAULT_BETA1
    beta2: float = DEFAULT_BETA2
    epsilon: float = DEFAULT_EPSILON
    step_count: int = 0
    first_moments: List[Tensor] = field(default_factory=list)
    second_moments: List[Tensor] = field(default_factory=list)


# ===========================================
# CONSTRUCTION
# ===========================================


def seeded_rng(*seed: int) -> np.random.Generator:
    """
    PCG64 generator for one or more integer seed words.

    Any Python integer is accepted; words are reduced modulo 2**64, so
    negative seeds map to distinct, reproducible streams.
    """
    words = [int(s) & SEED_MASK for s in seed]
    return np.random.Generator(np.random.PCG64(words[0] if len(words) == 1 else words))


def init_net(arch: Sequence[int], activation: Activation = "relu", seed: int = 0) -> RewardNet:
    """
    Build a freshly initialized network.

    Weights are drawn from ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))`` with a
    PCG64 generator seeded by ``seed``; biases start at zero. Hidden layers
    use ``activation``, the output layer is linear.

    Args:
        arch: Layer widths, input dim first and 1 last (e.g. [242, 64, 64, 1])
        activation: Hidden activation
        seed: Generator seed; the same seed gives a bit-identical net

    Returns:
        The initialized network

    Raises:
        UsageError: If ``arch`` has fewer than two entries or does not end in 1
    """
    widths = [int(w) for w in arch]
    if len(widths) < 2:
        raise UsageError(f"arch needs at least an input and an output width, got {widths}")
    if any(w < 1 for w in widths):
        raise UsageError(f"arch widths must be positive, got {widths}")
    if widths[-1] != 1:
        raise UsageError(f"arch must end with output width 1, got {widths[-1]}")

    rng = seeded_rng(seed)
    layers: List[Layer] = []
    for index, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        weights = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        last = index == len(widths) - 2
        layers.append(Layer(weights, np.zeros(fan_out), "linear" if last else activation))
    return RewardNet(input_dim=widths[0], layers=layers)


def clone(net: RewardNet) -> RewardNet:
    """Deep copy of a network."""
    return RewardNet(
        input_dim=net.input_dim,
        layers=[Layer(ly.weights.copy(), ly.biases.copy(), ly.activation) for ly in net.layers],
    )


def scale_output(net: RewardNet, factor: float) -> RewardNet:
    """Copy of ``net`` computing ``factor * R``."""
    scaled = clone(net)
    scaled.layers[-1].weights *= factor
    scaled.layers[-1].biases *= factor
    return scaled


def add_output_bias(net: RewardNet, shift: float) -> RewardNet:
    """Copy of ``net`` computing ``R + shift``."""
    shifted = clone(net)
    shifted.layers[-1].biases += shift
    return shifted


def parameters(net: RewardNet) -> List[Tensor]:
    """Parameter arrays in a fixed order: W0, b0, W1, b1, ..."""
    params: List[Tensor] = []
    for layer in net.layers:
        params.extend((layer.weights, layer.biases))
    return params


# ===========================================
# EVALUATION
# ===========================================


def _as_input(net: RewardNet, x: npt.ArrayLike) -> Tensor:
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if arr.shape[0] != net.input_dim:
        raise ShapeError("network input", net.input_dim, arr.shape[0])
    if not np.all(np.isfinite(arr)):
        raise UsageError("network input contains NaN or Inf", code="NON_FINITE")
    return arr


def _as_batch(net: RewardNet, xs: npt.ArrayLike) -> Tensor:
    arr = np.asarray(xs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != net.input_dim:
        raise ShapeError("network input batch", f"(n, {net.input_dim})", arr.shape)
    if not np.all(np.isfinite(arr)):
        raise UsageError("network input contains NaN or Inf", code="NON_FINITE")
    return arr


def _activate(z: Tensor, activation: Activation) -> Tensor:
    return np.maximum(z, 0.0) if activation == "relu" else z


def _check_finite(values: Tensor, what: str) -> Tensor:
    if not np.all(np.isfinite(values)):
        raise UsageError(f"{what} is not finite", code="NON_FINITE")
    return values


def forward(net: RewardNet, x: npt.ArrayLike) -> float:
    """
    Evaluate ``R(x)`` for a single input.

    Args:
        net: Network to evaluate
        x: Input of length ``net.input_dim``

    Returns:
        The scalar reward

    Raises:
        ShapeError: If ``x`` has the wrong length
    """
    h = _as_input(net, x)
    for layer in net.layers:
        h = _activate(layer.weights @ h + layer.biases, layer.activation)
    return float(_check_finite(h, "network output")[0])


def forward_batch(net: RewardNet, xs: npt.ArrayLike) -> Tensor:
    """Evaluate ``R`` on each row of an ``(n, input_dim)`` array."""
    h = _as_batch(net, xs)
    for layer in net.layers:
        h = _activate(h @ layer.weights.T + layer.biases, layer.activation)
    return _check_finite(h[:, 0].copy(), "network output")


def input_gradient(net: RewardNet, x: npt.ArrayLike) -> Tensor:
    """
    Compute ``dR/dx`` by reverse mode.

    ReLU units whose pre-activation is exactly 0 contribute subgradient 0.

    Args:
        net: Network to differentiate
        x: Input of length ``net.input_dim``

    Returns:
        Gradient with the same length as ``x``
    """
    h = _as_input(net, x)
    pre_activations: List[Tensor] = []
    for layer in net.layers:
        z = layer.weights @ h + layer.biases
        pre_activations.append(z)
        h = _activate(z, layer.activation)

    grad = np.ones(1, dtype=np.float64)
    for layer, z in zip(reversed(net.layers), reversed(pre_activations)):
        if layer.activation == "relu":
            grad = grad * (z > 0.0)
        grad = layer.weights.T @ grad
    return _check_finite(grad, "input gradient")


# ===========================================
# TRAINING
# ===========================================


def make_optimizer(
    net: RewardNet,
    kind: OptimizerKind = "adam",
    learning_rate: float = DEFAULT_LEARNING_RATE,
    beta1: float = DEFAULT_BETA1,
    beta2: float = DEFAULT_BETA2,
    epsilon: float = DEFAULT_EPSILON,
) -> OptimizerState:
    """
    Create optimizer state for ``net``.

    Raises:
        UsageError: On an unknown kind or non-positive learning rate
    """
    if kind not in ("sgd", "adam"):
        raise UsageError(f"Unknown optimizer '{kind}'")
    if learning_rate <= 0:
        raise UsageError(f"learning_rate must be positive, got {learning_rate}")
    state = OptimizerState(
        kind=kind, learning_rate=learning_rate, beta1=beta1, beta2=beta2, epsilon=epsilon
    )
    if kind == "adam":
        state.first_moments = [np.zeros_like(p) for p in parameters(net)]
        state.second_moments = [np.zeros_like(p) for p in parameters(net)]
    return state


def mse_gradients(net: RewardNet, xs: Tensor, ys: Tensor) -> Tuple[float, List[Tensor]]:
    """
    Mean squared error of ``net`` on ``(xs, ys)`` and its parameter gradients.

    Returns:
        ``(loss, grads)`` with ``grads`` ordered like ``parameters(net)``
    """
    xs = _as_batch(net, xs)
    ys = np.asarray(ys, dtype=np.float64).reshape(-1)
    if ys.shape[0] != xs.shape[0]:
        raise ShapeError("target count", xs.shape[0], ys.shape[0])

    activations = [xs]
    pre_activations: List[Tensor] = []
    h = xs
    for layer in net.layers:
        z = h @ layer.weights.T + layer.biases
        pre_activations.append(z)
        h = _activate(z, layer.activation)
        activations.append(h)

    err = h[:, 0] - ys
    loss = float(np.mean(err * err))

    grads: List[Tensor] = []
    delta = (2.0 / xs.shape[0]) * err[:, None]
    for index in reversed(range(len(net.layers))):
        layer = net.layers[index]
        if layer.activation == "relu":
            delta = delta * (pre_activations[index] > 0.0)
        grads.append(delta.sum(axis=0))
        grads.append(delta.T @ activations[index])
        delta = delta @ layer.weights
    grads.reverse()
    return loss, grads


def _apply_update(net: RewardNet, grads: List[Tensor], opt: OptimizerState) -> None:
    params = parameters(net)
    if opt.kind == "sgd":
        for param, grad in zip(params, grads):
            param -= opt.learning_rate * grad
        opt.step_count += 1
        return

    if len(opt.first_moments) != len(params) or any(
        m.shape != p.shape for m, p in zip(opt.first_moments, params)
    ):
        raise UsageError("Optimizer accumulators do not match the network parameters")
    opt.step_count += 1
    t = opt.step_count
    correction1 = 1.0 - opt.beta1**t
    correction2 = 1.0 - opt.beta2**t
    for param, grad, m, v in zip(params, grads, opt.first_moments, opt.second_moments):
        m *= opt.beta1
        m += (1.0 - opt.beta1) * grad
        v *= opt.beta2
        v += (1.0 - opt.beta2) * grad * grad
        param -= opt.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + opt.epsilon)


def train_step_arrays(net: RewardNet, xs: Tensor, ys: Tensor, opt: OptimizerState) -> float:
    """Array form of ``train_step``: ``xs`` is ``(n, input_dim)``, ``ys`` is ``(n,)``."""
    if len(xs) == 0:
        raise UsageError("train_step needs a nonempty batch")
    loss, grads = mse_gradients(net, xs, ys)
    _apply_update(net, grads, opt)
    return loss


def train_step(
    net: RewardNet,
    batch: Sequence[Tuple[npt.ArrayLike, float]],
    opt: OptimizerState,
) -> float:
    """
    Take one optimizer step on the batch MSE.

    Args:
        net: Network, updated in place
        batch: ``(x, target)`` pairs
        opt: Optimizer state, updated in place

    Returns:
        Batch MSE before the update

    Raises:
        UsageError: If the batch is empty
    """
    if not batch:
        raise UsageError("train_step needs a nonempty batch")
    xs = np.stack([_as_input(net, x) for x, _ in batch])
    ys = np.asarray([float(y) for _, y in batch], dtype=np.float64)
    return train_step_arrays(net, xs, ys, opt)


def mse(net: RewardNet, xs: Tensor, ys: Tensor, predictions: Optional[Tensor] = None) -> float:
    """Mean squared error of ``net`` (or of precomputed ``predictions``) against ``ys``."""
    preds = forward_batch(net, xs) if predictions is None else predictions
    err = preds - np.asarray(ys, dtype=np.float64)
    return float(np.mean(err * err))
