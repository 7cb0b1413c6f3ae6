"""MLP forward/backward correctness: stability, gauge invariance, grad checks."""

import numpy as np
import pytest

from wood.errors import DimensionError, InputError
from wood.model import MlpModel, backward, forward, init, predict_probs


def zeroed(model):
    for w in model.weights:
        w[:] = 0.0
    for b in model.biases:
        b[:] = 0.0
    return model


class TestInit:
    def test_deterministic(self):
        a = init((2, 4, 3), seed=7)
        b = init((2, 4, 3), seed=7)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_minimal_model(self):
        model = init((5, 3), seed=0)
        assert model.input_dim == 5
        assert model.n_classes == 3

    def test_empty_dims_rejected(self):
        with pytest.raises(DimensionError):
            init((), seed=0)

    def test_bias_zero_weight_scale(self):
        model = init((100, 50), seed=1)
        assert np.all(model.biases[0] == 0.0)
        assert np.std(model.weights[0]) == pytest.approx(np.sqrt(2.0 / 100), rel=0.1)


class TestForward:
    def test_zero_parameters_give_uniform(self):
        model = zeroed(init((3, 4, 5), seed=0))
        trace = forward(model, np.ones(3))
        np.testing.assert_allclose(trace.probs[0], np.full(5, 0.2), atol=1e-15)

    def test_huge_logits_stable(self):
        model = MlpModel((1, 2), [np.array([[1000.0, 1000.0]])], [np.zeros(2)])
        trace = forward(model, np.array([1.0]))
        np.testing.assert_allclose(trace.probs[0], [0.5, 0.5])
        assert np.all(np.isfinite(trace.probs))

    def test_softmax_contract(self, rng):
        model = init((4, 8, 3), seed=3)
        x = rng.normal(size=(20, 4))
        probs = forward(model, x).probs
        assert np.all(probs >= 0)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_rejects_nan_input(self):
        model = init((2, 3), seed=0)
        with pytest.raises(InputError):
            forward(model, np.array([np.nan, 1.0]))

    def test_rejects_wrong_width(self):
        model = init((2, 3), seed=0)
        with pytest.raises(DimensionError):
            forward(model, np.ones(3))

    def test_predict_probs_squeezes(self):
        model = init((2, 3), seed=0)
        assert predict_probs(model, np.ones(2)).shape == (3,)
        assert predict_probs(model, np.ones((4, 2))).shape == (4, 3)


class TestBackward:
    def test_constant_gradient_annihilated(self, rng):
        # The softmax Jacobian kills additive constants, which is what makes
        # gauge-centered transport gradients safe.
        model = init((3, 5, 4), seed=11)
        x = rng.normal(size=(6, 3))
        trace = forward(model, x)
        grads = backward(model, trace, np.full_like(trace.probs, 3.7))
        for g in grads.weights + grads.biases:
            np.testing.assert_allclose(g, 0.0, atol=1e-12)

    def test_gauge_invariance(self, rng):
        model = init((3, 5, 4), seed=12)
        x = rng.normal(size=(5, 3))
        trace = forward(model, x)
        g = rng.normal(size=trace.probs.shape)
        base = backward(model, trace, g)
        shifted = backward(model, trace, g + 42.0)
        for a, b in zip(base.weights + base.biases, shifted.weights + shifted.biases):
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_zero_gradient(self, rng):
        model = init((2, 4, 3), seed=5)
        trace = forward(model, rng.normal(size=(3, 2)))
        grads = backward(model, trace, np.zeros_like(trace.probs))
        for g in grads.weights + grads.biases:
            assert np.all(g == 0.0)

    def test_shape_mismatch(self, rng):
        model = init((2, 3), seed=5)
        trace = forward(model, rng.normal(size=(3, 2)))
        with pytest.raises(DimensionError):
            backward(model, trace, np.zeros((2, 3)))

    def test_parameter_gradients_match_finite_differences(self, rng):
        # Composite loss: cross-entropy on two samples plus a quadratic
        # score term on a third, checked parameter by parameter.
        beta = 0.3

        def batch_loss(model, x, ys):
            probs = forward(model, x).probs
            ce = -np.log(probs[0, ys[0]]) - np.log(probs[1, ys[1]])
            score = 1.0 - float(probs[2] @ probs[2])
            return float(ce - beta * score)

        for trial in range(20):
            model = init((3, 6, 4, 3), seed=100 + trial)
            x = rng.normal(size=(3, 3))
            ys = [int(rng.integers(3)), int(rng.integers(3))]

            trace = forward(model, x)
            probs = trace.probs
            grad_probs = np.zeros_like(probs)
            grad_probs[0, ys[0]] = -1.0 / probs[0, ys[0]]
            grad_probs[1, ys[1]] = -1.0 / probs[1, ys[1]]
            grad_probs[2] = beta * 2.0 * probs[2]
            grads = backward(model, trace, grad_probs)

            step = 1e-5
            for layer in range(len(model.weights)):
                w = model.weights[layer]
                flat = rng.choice(w.size, size=min(6, w.size), replace=False)
                for idx in flat:
                    i, j = np.unravel_index(idx, w.shape)
                    orig = w[i, j]
                    w[i, j] = orig + step
                    up = batch_loss(model, x, ys)
                    w[i, j] = orig - step
                    down = batch_loss(model, x, ys)
                    w[i, j] = orig
                    fd = (up - down) / (2 * step)
                    got = grads.weights[layer][i, j]
                    assert got == pytest.approx(fd, rel=1e-4, abs=1e-7)
