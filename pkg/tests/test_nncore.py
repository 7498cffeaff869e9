"""Tests for the feedforward engine: forward/backward math, optimizers,
and the finite-difference oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from progtransfer import nncore
from progtransfer.errors import (
    ConfigError,
    InvalidArchitectureError,
    LabelError,
    NumericError,
    ShapeError,
)


def random_net(dims, seed):
    return nncore.init_network(list(dims), seed)


class TestInit:
    def test_parameter_count_matches_closed_form(self):
        dims = [88, 256, 256, 256, 256, 4]
        net = random_net(dims, 0)
        expected = sum((i + 1) * o for i, o in zip(dims[:-1], dims[1:]))
        assert expected == 221188
        assert nncore.count_params(net) == expected

    def test_same_seed_identical_weights(self):
        a = random_net([2, 2], 7)
        b = random_net([2, 2], 7)
        for la, lb in zip(a.layers, b.layers):
            assert np.array_equal(la.weights, lb.weights)
            assert np.array_equal(la.bias, lb.bias)

    def test_different_seed_differs(self):
        a = random_net([4, 3], 1)
        b = random_net([4, 3], 2)
        assert not np.array_equal(a.layers[0].weights, b.layers[0].weights)

    def test_glorot_range_and_zero_bias(self):
        net = random_net([30, 20], 3)
        limit = math.sqrt(6.0 / 50.0)
        assert np.all(np.abs(net.layers[0].weights) <= limit)
        assert np.all(net.layers[0].bias == 0.0)

    def test_too_few_dims_rejected(self):
        with pytest.raises(InvalidArchitectureError):
            nncore.init_network([3], 0)

    def test_degenerate_dim_rejected(self):
        with pytest.raises(InvalidArchitectureError):
            nncore.init_network([4, 0, 2], 0)


class TestForward:
    def test_zero_weights_give_uniform_output(self):
        net = random_net([5, 3, 4], 0)
        for lp in net.layers:
            lp.weights[:] = 0.0
            lp.bias[:] = 0.0
        trace = nncore.forward(net, np.ones(5))
        assert np.allclose(trace.output_probs, 0.25)

    def test_sigmoid_of_zero_preactivation(self):
        net = random_net([3, 1, 2], 0)
        net.layers[0].weights[:] = 0.0
        trace = nncore.forward(net, np.array([1.0, -2.0, 0.5]))
        assert trace.activations[0][0] == pytest.approx(0.5)

    def test_eval_mode_is_deterministic_with_all_one_masks(self):
        net = random_net([6, 4, 3], 1)
        x = np.random.default_rng(0).normal(size=6)
        t1 = nncore.forward(net, x, mode="eval", dropout_rate=0.5)
        t2 = nncore.forward(net, x, mode="eval", dropout_rate=0.5)
        assert np.array_equal(t1.output_probs, t2.output_probs)
        assert all(np.all(m == 1.0) for m in t1.dropout_masks)

    def test_train_mode_requires_rng(self):
        net = random_net([4, 4, 2], 0)
        with pytest.raises(ConfigError):
            nncore.forward(net, np.zeros(4), mode="train", dropout_rate=0.5)

    def test_dimension_mismatch(self):
        net = random_net([4, 4, 2], 0)
        with pytest.raises(ShapeError):
            nncore.forward(net, np.zeros(5))

    def test_mask_entries_are_zero_or_scaled(self):
        net = random_net([4, 50, 2], 0)
        rng = np.random.default_rng(5)
        trace = nncore.forward(net, np.ones(4), mode="train", dropout_rate=0.25, rng=rng)
        mask = trace.dropout_masks[0]
        assert set(np.unique(mask)) <= {0.0, 1.0 / 0.75}

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=8), st.floats(-30, 30))
    def test_softmax_sums_to_one_and_is_shift_invariant(self, zs, shift):
        z = np.array(zs)
        p = nncore.softmax(z)
        assert abs(p.sum() - 1.0) < 1e-9
        p_shift = nncore.softmax(z + shift)
        assert np.max(np.abs(p - p_shift)) < 1e-9

    def test_dropout_preserves_expected_activation(self):
        # inverted dropout: mean of masked/scaled activations approaches
        # the eval-mode activation
        net = random_net([6, 8, 3], 2)
        x = np.random.default_rng(3).normal(size=6)
        eval_act = nncore.forward(net, x).hidden_sigmoid[0]
        rng = np.random.default_rng(42)
        total = np.zeros(8)
        draws = 20000
        for _ in range(draws):
            t = nncore.forward(net, x, mode="train", dropout_rate=0.5, rng=rng)
            total += t.activations[0]
        mean_act = total / draws
        assert np.all(np.abs(mean_act - eval_act) <= 0.02 * np.abs(eval_act))


class TestCrossEntropy:
    def test_uniform_four_classes(self):
        assert nncore.cross_entropy(np.full(4, 0.25), 2) == pytest.approx(math.log(4.0))

    def test_perfect_prediction(self):
        assert nncore.cross_entropy(np.array([0.0, 1.0, 0.0, 0.0]), 1) == 0.0

    def test_eighth_probability(self):
        probs = np.array([0.5, 0.25, 0.125, 0.125])
        assert nncore.cross_entropy(probs, 2) == pytest.approx(-math.log(0.125), abs=1e-12)

    def test_label_out_of_range(self):
        with pytest.raises(LabelError):
            nncore.cross_entropy(np.full(4, 0.25), 4)

    def test_zero_probability_floored(self):
        val = nncore.cross_entropy(np.array([1.0, 0.0]), 1)
        assert val == pytest.approx(-math.log(1e-12))


class TestBackward:
    def test_output_layer_delta_is_probs_minus_onehot(self):
        # single linear (no hidden) softmax layer: dW = (p - y) x^T
        net = random_net([3, 4], 9)
        x = np.array([0.5, -1.0, 2.0])
        trace = nncore.forward(net, x)
        grads = nncore.backward(net, trace, 2)
        delta = trace.output_probs.copy()
        delta[2] -= 1.0
        assert np.allclose(grads.weights[0], np.outer(delta, x), atol=1e-15)
        assert np.allclose(grads.biases[0], delta, atol=1e-15)

    def test_zero_input_zero_weights_first_layer_gradient(self):
        net = random_net([4, 3, 2], 0)
        for lp in net.layers:
            lp.weights[:] = 0.0
        trace = nncore.forward(net, np.zeros(4))
        grads = nncore.backward(net, trace, 0)
        assert np.all(grads.weights[0] == 0.0)

    def test_matches_finite_differences_on_small_net(self):
        net = random_net([5, 4, 3], 123)
        x = np.random.default_rng(7).normal(size=5)
        assert nncore.grad_check(net, x, 1, eps=1e-5) < 1e-4

    def test_finite_difference_sweep(self):
        # the gradient-correctness property across many random shapes
        rng = np.random.default_rng(2024)
        for trial in range(25):
            n_hidden = int(rng.integers(1, 4))
            dims = [int(rng.integers(2, 11))]
            dims += [int(rng.integers(2, 9)) for _ in range(n_hidden)]
            dims.append(int(rng.integers(2, 6)))
            net = random_net(dims, int(rng.integers(0, 2**31)))
            x = rng.normal(size=dims[0])
            label = int(rng.integers(0, dims[-1]))
            assert nncore.grad_check(net, x, label, eps=1e-5) < 1e-4

    def test_batch_backward_is_mean_of_single_grads(self):
        net = random_net([4, 5, 3], 11)
        rng = np.random.default_rng(0)
        xs = rng.normal(size=(6, 4))
        ys = rng.integers(0, 3, size=6)
        batch_trace = nncore.forward_batch(net, xs)
        batch_grads = nncore.backward_batch(net, batch_trace, ys)
        acc_w = [np.zeros_like(lp.weights) for lp in net.layers]
        for x, y in zip(xs, ys):
            g = nncore.backward(net, nncore.forward(net, x), int(y))
            for k in range(len(acc_w)):
                acc_w[k] += g.weights[k] / len(xs)
        for k in range(len(acc_w)):
            assert np.allclose(batch_grads.weights[k], acc_w[k], atol=1e-12)


class TestGradCheck:
    def test_linear_net_is_exact_to_fd_error(self):
        net = random_net([6, 3], 5)
        x = np.random.default_rng(1).normal(size=6)
        assert nncore.grad_check(net, x, 0, eps=1e-5) < 1e-7

    def test_zero_epsilon_rejected(self):
        net = random_net([3, 2], 0)
        with pytest.raises(ConfigError):
            nncore.grad_check(net, np.zeros(3), 0, eps=0.0)


class TestOptimizers:
    def test_zero_gradient_is_fixed_point(self):
        for opt in ("sgd", "adam"):
            net = random_net([3, 2], 4)
            before = net.copy()
            grads = nncore.Gradients(
                [np.zeros_like(lp.weights) for lp in net.layers],
                [np.zeros_like(lp.bias) for lp in net.layers],
            )
            state = nncore.init_opt_state(net, opt)
            nncore.optimizer_step(net, grads, state, 0.0005)
            for la, lb in zip(net.layers, before.layers):
                assert np.array_equal(la.weights, lb.weights)

    def test_sgd_arithmetic(self):
        net = nncore.NetworkParams([nncore.LayerParams(np.array([[1.0]]), np.array([0.0]))])
        grads = nncore.Gradients([np.array([[2.0]])], [np.array([0.0])])
        state = nncore.init_opt_state(net, "sgd")
        nncore.optimizer_step(net, grads, state, 0.0005)
        assert net.layers[0].weights[0, 0] == pytest.approx(0.999)

    def test_adam_first_step_magnitude_is_lr(self):
        net = random_net([3, 2], 8)
        before = net.copy()
        rng = np.random.default_rng(2)
        g = rng.uniform(0.01, 10.0, size=net.layers[0].weights.shape)
        g *= np.sign(rng.normal(size=g.shape))
        grads = nncore.Gradients([g], [rng.uniform(0.01, 1.0, size=2)])
        state = nncore.init_opt_state(net, "adam")
        lr = 0.0005
        nncore.optimizer_step(net, grads, state, lr)
        delta = net.layers[0].weights - before.layers[0].weights
        assert np.all(np.sign(delta) == -np.sign(g))
        assert np.allclose(np.abs(delta), lr, rtol=1e-6)
        assert state.step == 1

    def test_non_finite_gradients_leave_params_unchanged(self):
        net = random_net([3, 2], 8)
        before = net.copy()
        g = np.full_like(net.layers[0].weights, np.nan)
        grads = nncore.Gradients([g], [np.zeros(2)])
        state = nncore.init_opt_state(net, "adam")
        with pytest.raises(NumericError):
            nncore.optimizer_step(net, grads, state, 0.001)
        assert np.array_equal(net.layers[0].weights, before.layers[0].weights)

    def test_small_lr_sgd_never_increases_batch_loss(self):
        rng = np.random.default_rng(77)
        for _ in range(10):
            dims = [int(rng.integers(2, 8)), int(rng.integers(2, 8)), int(rng.integers(2, 5))]
            net = random_net(dims, int(rng.integers(0, 2**31)))
            xs = rng.normal(size=(16, dims[0]))
            ys = rng.integers(0, dims[-1], size=16)
            trace = nncore.forward_batch(net, xs)
            loss_before = nncore.cross_entropy_batch(trace.output_probs, ys)
            grads = nncore.backward_batch(net, trace, ys)
            state = nncore.init_opt_state(net, "sgd")
            nncore.optimizer_step(net, grads, state, 1e-6)
            loss_after = nncore.cross_entropy_batch(
                nncore.forward_batch(net, xs).output_probs, ys
            )
            assert loss_after <= loss_before + 1e-12


class TestDeterminism:
    def test_train_forward_reproducible_with_same_seed(self):
        net = random_net([6, 5, 3], 0)
        x = np.linspace(-1, 1, 6)
        t1 = nncore.forward(net, x, "train", 0.5, np.random.default_rng(99))
        t2 = nncore.forward(net, x, "train", 0.5, np.random.default_rng(99))
        assert np.array_equal(t1.output_probs, t2.output_probs)
        for m1, m2 in zip(t1.dropout_masks, t2.dropout_masks):
            assert np.array_equal(m1, m2)
