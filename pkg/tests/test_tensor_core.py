"""Tests for the dense network engine."""

from typing import List

import numpy as np
import pytest

from reward_lens.errors import ShapeError, UsageError
from reward_lens.tensor_core import (
    Layer,
    RewardNet,
    add_output_bias,
    clone,
    forward,
    forward_batch,
    init_net,
    input_gradient,
    make_optimizer,
    mse,
    parameters,
    scale_output,
    seeded_rng,
    train_step,
)

FD_STEP = 1e-5


def linear_net(weights: List[float], bias: float = 0.0) -> RewardNet:
    return RewardNet(
        input_dim=len(weights),
        layers=[Layer(np.array([weights], dtype=np.float64), np.array([bias]), "linear")],
    )


def pre_activation_margin(net: RewardNet, x: np.ndarray) -> float:
    """Smallest |z| over hidden ReLU units."""
    h = x
    margin = np.inf
    for layer in net.layers:
        z = layer.weights @ h + layer.biases
        if layer.activation == "relu":
            margin = min(margin, float(np.min(np.abs(z))))
            h = np.maximum(z, 0.0)
        else:
            h = z
    return margin


class TestForward:
    def test_single_linear_layer(self):
        assert forward(linear_net([2.0, 3.0], 1.0), [1.0, 1.0]) == 6.0

    def test_zero_weights_return_final_bias(self):
        net = init_net([5, 4, 1], seed=3)
        for layer in net.layers:
            layer.weights[:] = 0.0
        net.layers[-1].biases[:] = 0.5
        assert forward(net, np.random.default_rng(0).normal(size=5)) == 0.5

    def test_wrong_length_names_dimensions(self):
        net = init_net([242, 8, 1])
        with pytest.raises(ShapeError) as exc_info:
            forward(net, np.zeros(241))
        assert exc_info.value.expected == 242
        assert exc_info.value.actual == 241
        assert "242" in str(exc_info.value)

    def test_non_finite_input_rejected(self):
        net = init_net([3, 1])
        with pytest.raises(UsageError) as exc_info:
            forward(net, [0.0, np.nan, 1.0])
        assert exc_info.value.code == "NON_FINITE"

    def test_deterministic(self):
        net = init_net([242, 16, 16, 1], seed=4)
        x = np.random.default_rng(1).uniform(size=242)
        assert forward(net, x) == forward(net, x)

    def test_batch_matches_single(self):
        net = init_net([10, 6, 1], seed=2)
        xs = np.random.default_rng(2).normal(size=(7, 10))
        expected = [forward(net, x) for x in xs]
        np.testing.assert_allclose(forward_batch(net, xs), expected, rtol=1e-12, atol=1e-12)

    def test_batch_shape_checked(self):
        with pytest.raises(ShapeError):
            forward_batch(init_net([10, 1]), np.zeros((3, 9)))

    def test_piecewise_linear_along_ray(self):
        rng = np.random.default_rng(5)
        net = init_net([12, 8, 8, 1], seed=5)
        checked = 0
        while checked < 20:
            x = rng.normal(size=12)
            if pre_activation_margin(net, x) < 1e-3:
                continue
            alpha = 1.0 + 1e-9
            extrapolated = forward(net, x) + (alpha - 1.0) * float(input_gradient(net, x) @ x)
            assert forward(net, alpha * x) == pytest.approx(extrapolated, abs=1e-12)
            checked += 1


class TestInputGradient:
    def test_linear_net_gradient_is_weights(self):
        grad = input_gradient(linear_net([2.0, 3.0]), [7.0, -4.0])
        np.testing.assert_array_equal(grad, [2.0, 3.0])

    def test_quirk_oracle_ignores_s(self, quirk_oracle):
        x = np.random.default_rng(0).choice([0.0, 0.5, 0.75, 1.0], size=242)
        assert not input_gradient(quirk_oracle, x)[:121].any()

    def test_relu_kink_uses_zero_subgradient(self):
        net = RewardNet(
            input_dim=1,
            layers=[
                Layer(np.array([[1.0]]), np.array([0.0]), "relu"),
                Layer(np.array([[1.0]]), np.array([0.0]), "linear"),
            ],
        )
        assert input_gradient(net, [0.0])[0] == 0.0
        assert input_gradient(net, [1.0])[0] == 1.0

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(2024)
        agreed = 0
        seed = 0
        while agreed < 50:
            seed += 1
            arch = [int(rng.integers(2, 10)), int(rng.integers(2, 10)), int(rng.integers(2, 6)), 1]
            net = init_net(arch, seed=seed)
            for layer in net.layers:
                layer.biases[:] = rng.normal(scale=0.1, size=layer.biases.shape)
            x = rng.normal(size=arch[0])
            # central differences are exact only away from ReLU kinks
            if pre_activation_margin(net, x) < 1e-3:
                continue
            grad = input_gradient(net, x)
            for i in range(arch[0]):
                e = np.zeros(arch[0])
                e[i] = FD_STEP
                fd = (forward(net, x + e) - forward(net, x - e)) / (2 * FD_STEP)
                assert abs(fd - grad[i]) <= max(1e-4 * abs(grad[i]), 1e-7)
            agreed += 1


class TestInitNet:
    def test_same_seed_same_weights(self):
        a = init_net([242, 64, 64, 1], seed=1)
        b = init_net([242, 64, 64, 1], seed=1)
        for pa, pb in zip(parameters(a), parameters(b)):
            np.testing.assert_array_equal(pa, pb)

    def test_different_seed_different_weights(self):
        a = init_net([242, 64, 1], seed=1)
        b = init_net([242, 64, 1], seed=2)
        assert not np.array_equal(a.layers[0].weights, b.layers[0].weights)

    def test_negative_seed(self):
        a = init_net([242, 8, 1], seed=-5)
        b = init_net([242, 8, 1], seed=-5)
        np.testing.assert_array_equal(a.layers[0].weights, b.layers[0].weights)
        c = init_net([242, 8, 1], seed=5)
        assert not np.array_equal(a.layers[0].weights, c.layers[0].weights)

    def test_single_affine_layer(self):
        net = init_net([242, 1])
        assert len(net.layers) == 1
        assert net.layers[0].activation == "linear"
        assert not net.layers[0].biases.any()

    def test_weights_within_fan_in_bound(self):
        net = init_net([242, 64, 64, 1], seed=7)
        for layer in net.layers:
            assert np.all(np.abs(layer.weights) <= 1.0 / np.sqrt(layer.in_dim))
            assert not layer.biases.any()

    def test_hidden_relu_output_linear(self):
        net = init_net([242, 64, 64, 1])
        assert [layer.activation for layer in net.layers] == ["relu", "relu", "linear"]
        assert net.arch == [242, 64, 64, 1]

    @pytest.mark.parametrize("arch", [[242], [], [242, 4]])
    def test_bad_arch(self, arch):
        with pytest.raises(UsageError):
            init_net(arch)

    def test_layers_must_chain(self):
        with pytest.raises(ShapeError):
            RewardNet(
                input_dim=4,
                layers=[
                    Layer(np.zeros((3, 4)), np.zeros(3), "relu"),
                    Layer(np.zeros((1, 2)), np.zeros(1), "linear"),
                ],
            )


class TestSeededRng:
    @pytest.mark.parametrize("seed", [-1, -(2**70), 0, 2**64 + 3])
    def test_any_integer_is_reproducible(self, seed):
        assert seeded_rng(seed).integers(1 << 30) == seeded_rng(seed).integers(1 << 30)

    def test_negative_and_positive_streams_differ(self):
        assert seeded_rng(-1).random() != seeded_rng(1).random()

    def test_multiple_words(self):
        assert seeded_rng(-2, 3).random() == seeded_rng(-2, 3).random()
        assert seeded_rng(-2, 3).random() != seeded_rng(-2, 4).random()


class TestOutputTransforms:
    def test_scale_and_shift(self):
        net = init_net([6, 5, 1], seed=9)
        x = np.linspace(-1, 1, 6)
        assert forward(scale_output(net, 10.0), x) == pytest.approx(10.0 * forward(net, x))
        assert forward(add_output_bias(net, 2.5), x) == pytest.approx(forward(net, x) + 2.5)

    def test_transforms_leave_original_untouched(self):
        net = init_net([6, 5, 1], seed=9)
        before = [p.copy() for p in parameters(net)]
        scale_output(net, 3.0)
        add_output_bias(net, 1.0)
        for p, q in zip(parameters(net), before):
            np.testing.assert_array_equal(p, q)

    def test_clone_is_deep(self):
        net = init_net([3, 1])
        copy = clone(net)
        copy.layers[0].weights[:] = 0.0
        assert net.layers[0].weights.any()


class TestTrainStep:
    def test_exact_net_has_zero_loss_and_adam_keeps_weights(self):
        net = linear_net([2.0, 3.0], 1.0)
        xs = [np.array([1.0, 1.0]), np.array([0.0, 2.0]), np.array([-1.0, 0.5])]
        batch = [(x, forward(net, x)) for x in xs]
        opt = make_optimizer(net, "adam")
        before = [p.copy() for p in parameters(net)]
        assert train_step(net, batch, opt) == 0.0
        for p, q in zip(parameters(net), before):
            np.testing.assert_array_equal(p, q)
        assert opt.step_count == 1

    def test_fits_linear_function_with_sgd(self):
        net = init_net([1, 1], seed=0)
        xs = np.linspace(-3.0, 3.0, 100)
        batch = [(np.array([x]), 3.0 * x) for x in xs]
        opt = make_optimizer(net, "sgd", learning_rate=0.01)
        for _ in range(500):
            train_step(net, batch, opt)
        assert mse(net, xs[:, None], 3.0 * xs) < 1e-6

    def test_single_example_loss_decreases(self):
        x = np.array([0.5, -1.5, 2.0])
        net = linear_net([0.1, 0.2, -0.3])
        # bias acts as one more unit input
        lr = 0.5 / (float(x @ x) + 1.0)
        opt = make_optimizer(net, "sgd", learning_rate=lr)
        before = train_step(net, [(x, 4.0)], opt)
        after = mse(net, x[None, :], np.array([4.0]))
        assert after < before

    def test_convex_problem_loss_non_increasing(self):
        rng = np.random.default_rng(3)
        xs = rng.normal(size=(40, 4))
        ys = xs @ np.array([1.0, -2.0, 0.5, 3.0]) + 0.25
        net = init_net([4, 1], seed=3)
        opt = make_optimizer(net, "sgd", learning_rate=0.01)
        batch = list(zip(xs, ys))
        losses = [train_step(net, batch, opt) for _ in range(100)]
        assert all(b <= a for a, b in zip(losses, losses[1:]))

    def test_empty_batch_rejected(self):
        net = init_net([3, 1])
        with pytest.raises(UsageError):
            train_step(net, [], make_optimizer(net))

    def test_adam_moments_mirror_parameters(self):
        net = init_net([242, 16, 1])
        opt = make_optimizer(net, "adam")
        assert [m.shape for m in opt.first_moments] == [p.shape for p in parameters(net)]
        assert [v.shape for v in opt.second_moments] == [p.shape for p in parameters(net)]

    def test_unknown_optimizer(self):
        with pytest.raises(UsageError):
            make_optimizer(init_net([3, 1]), "rmsprop")  # type: ignore[arg-type]
