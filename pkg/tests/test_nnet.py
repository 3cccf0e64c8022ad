"""Tests for the flat-parameter MLP machinery and Adam."""

import math

import numpy as np
import pytest

from asft import nnet
from asft.errors import DimensionError


def _random_net(gen, dims, activations):
    specs = [
        (f"l{i}", dims[i], dims[i + 1], activations[i]) for i in range(len(dims) - 1)
    ]
    layers, total = nnet.plan_layers(specs)
    values = gen.normal(size=total)
    return layers, values


class TestForward:
    def test_zero_weights_zero_output(self):
        layers, total = nnet.plan_layers([("a", 4, 3, "tanh"), ("b", 3, 2, "linear")])
        out = nnet.mlp_forward(np.zeros(total), layers, np.array([1.0, -2.0, 0.5, 3.0]))
        np.testing.assert_array_equal(out, np.zeros(2))

    def test_identity_layer(self):
        layers, total = nnet.plan_layers([("a", 1, 1, "linear")])
        values = np.array([1.0, 0.0])  # W=1, b=0
        out = nnet.mlp_forward(values, layers, np.array([2.0]))
        assert out[0] == 2.0

    def test_matches_independent_reimplementation(self):
        gen = np.random.default_rng(3)
        layers, values = _random_net(gen, [5, 7, 4, 2], ["tanh", "tanh", "linear"])
        x = gen.normal(size=5)
        out = nnet.mlp_forward(values, layers, x)

        # plain-loop re-implementation, no shared code paths
        h = list(x)
        for spec in layers:
            nxt = []
            for j in range(spec.out_dim):
                s = values[spec.b_offset + j]
                for i in range(spec.in_dim):
                    s += h[i] * values[spec.w_offset + i * spec.out_dim + j]
                nxt.append(math.tanh(s) if spec.activation == "tanh" else s)
            h = nxt
        np.testing.assert_allclose(out, h, atol=1e-12)

    def test_batched_equals_single(self):
        gen = np.random.default_rng(4)
        layers, values = _random_net(gen, [3, 6, 2], ["tanh", "linear"])
        xs = gen.normal(size=(5, 3))
        batched = nnet.mlp_forward(values, layers, xs)
        for i in range(5):
            np.testing.assert_allclose(batched[i], nnet.mlp_forward(values, layers, xs[i]))

    def test_rejects_wrong_width(self):
        layers, total = nnet.plan_layers([("a", 4, 2, "linear")])
        with pytest.raises(DimensionError):
            nnet.mlp_forward(np.zeros(total), layers, np.zeros(3))


class TestBackward:
    def test_gradient_matches_finite_differences(self):
        gen = np.random.default_rng(11)
        layers, values = _random_net(gen, [4, 5, 3], ["tanh", "linear"])
        x = gen.normal(size=4)

        def loss(v):
            out = nnet.mlp_forward(v, layers, x)
            return 0.5 * float(out @ out)

        out, acts = nnet.mlp_forward_cached(values, layers, x)
        grad = np.zeros_like(values)
        nnet.mlp_backward(values, layers, acts, out.copy(), grad)

        h = 1e-6
        for i in range(values.size):
            vp, vm = values.copy(), values.copy()
            vp[i] += h
            vm[i] -= h
            fd = (loss(vp) - loss(vm)) / (2 * h)
            assert abs(fd - grad[i]) <= 1e-6 * max(1.0, abs(fd))

    def test_batched_gradient_sums_examples(self):
        gen = np.random.default_rng(12)
        layers, values = _random_net(gen, [3, 4, 2], ["tanh", "linear"])
        xs = gen.normal(size=(6, 3))
        out, acts = nnet.mlp_forward_cached(values, layers, xs)
        grad_batched = np.zeros_like(values)
        nnet.mlp_backward(values, layers, acts, np.ones_like(out), grad_batched)

        grad_sum = np.zeros_like(values)
        for i in range(6):
            o, a = nnet.mlp_forward_cached(values, layers, xs[i])
            nnet.mlp_backward(values, layers, a, np.ones_like(o), grad_sum)
        np.testing.assert_allclose(grad_batched, grad_sum, atol=1e-12)


class TestParamPartition:
    def test_with_stochastic_replaces_only_masked(self):
        layers, total = nnet.plan_layers([("a", 2, 2, "linear"), ("b", 2, 1, "linear")])
        values = np.arange(total, dtype=float)
        mask = np.arange(layers[1].w_offset, total)
        part = nnet.ParamPartition(values, mask, layers)
        theta_s = np.full(mask.size, -1.0)
        full = part.with_stochastic(theta_s)
        np.testing.assert_array_equal(full[mask], theta_s)
        np.testing.assert_array_equal(full[: mask[0]], values[: mask[0]])
        # original untouched
        assert part.values[mask[0]] == float(mask[0])

    def test_rejects_duplicate_mask(self):
        layers, total = nnet.plan_layers([("a", 2, 2, "linear")])
        with pytest.raises(ValueError):
            nnet.ParamPartition(np.zeros(total), np.array([0, 0]), layers)

    def test_rejects_wrong_block_length(self):
        layers, total = nnet.plan_layers([("a", 2, 2, "linear")])
        part = nnet.ParamPartition(np.zeros(total), np.array([1, 2]), layers)
        with pytest.raises(DimensionError):
            part.with_stochastic(np.zeros(3))


class TestAdam:
    def test_zero_gradient_no_move(self):
        state = nnet.AdamState(lr=0.1)
        params = np.array([1.0, -2.0])
        new = nnet.adam_step(state, params, np.zeros(2))
        np.testing.assert_array_equal(new, params)

    def test_first_step_is_signed_lr(self):
        for g in (0.5, -3.0, 1e-4):
            state = nnet.AdamState(lr=0.01)
            new = nnet.adam_step(state, np.array([0.0]), np.array([g]))
            np.testing.assert_allclose(new[0], -0.01 * np.sign(g), rtol=1e-4)

    def test_quadratic_descent_matches_reference(self):
        # independent scripted Adam on f(x) = x^2
        x_ref, m, v = 1.0, 0.0, 0.0
        b1, b2, eps, lr = 0.9, 0.999, 1e-8, 0.05
        trail = []
        for t in range(1, 201):
            g = 2 * x_ref
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            x_ref -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
            trail.append(x_ref)
        assert abs(x_ref) < 0.05

        state = nnet.AdamState(lr=0.05)
        x = np.array([1.0])
        for t in range(200):
            x = nnet.adam_step(state, x, 2 * x)
            np.testing.assert_allclose(x[0], trail[t], rtol=1e-12)
        assert abs(x[0]) < 0.05

    def test_bit_identical_runs(self):
        gen = np.random.default_rng(0)
        grads = gen.normal(size=(50, 4))

        def run():
            state = nnet.AdamState(lr=0.01)
            p = np.zeros(4)
            for g in grads:
                p = nnet.adam_step(state, p, g)
            return p

        assert run().tobytes() == run().tobytes()

    def test_rejects_length_mismatch(self):
        with pytest.raises(DimensionError):
            nnet.adam_step(nnet.AdamState(lr=0.1), np.zeros(3), np.zeros(2))
