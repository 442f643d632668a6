"""Layer-level forward semantics against straight-line oracles."""

import mpmath
import numpy as np
import pytest

from holomem import nn
from holomem.nn.layers import Conv2D, Dense, Dropout, Flatten, LeakyReLU, MaxPool2x2, ReLU, Softmax


def conv_reference(x, filters, biases, pad):
    """Quadruple-loop same-padding convolution, one output pixel at a time."""
    b, c, h, w = x.shape
    m, _, k, _ = filters.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((b, m, h, w))
    for n in range(b):
        for f in range(m):
            for i in range(h):
                for j in range(w):
                    acc = 0.0
                    for ch in range(c):
                        for p in range(k):
                            for q in range(k):
                                acc += filters[f, ch, p, q] * xp[n, ch, i + p, j + q]
                    out[n, f, i, j] = acc + biases[f]
    return out


class TestConv2D:
    def test_identity_kernel(self):
        layer = Conv2D(1, 1, 3, rng=np.random.default_rng(0))
        layer.filters = np.zeros((1, 1, 3, 3))
        layer.filters[0, 0, 1, 1] = 1.0
        layer.biases[:] = 0.0
        x = np.random.default_rng(1).normal(size=(2, 1, 6, 6))
        assert np.allclose(layer.forward(x), x, atol=1e-14)

    def test_zero_input_gives_bias(self):
        layer = Conv2D(1, 3, 5, rng=np.random.default_rng(0))
        layer.biases = np.array([1.0, -2.0, 0.5])
        out = layer.forward(np.zeros((1, 1, 8, 8)))
        for f, b in enumerate(layer.biases):
            assert np.allclose(out[0, f], b)

    def test_matches_quadruple_loop_oracle(self):
        rng = np.random.default_rng(2)
        layer = Conv2D(1, 2, 3, rng=rng)
        x = rng.normal(size=(1, 1, 8, 8))
        expected = conv_reference(x, layer.filters, layer.biases, layer.pad)
        assert np.abs(layer.forward(x) - expected).max() < 1e-12

    def test_multichannel_matches_oracle(self):
        rng = np.random.default_rng(3)
        layer = Conv2D(3, 4, 5, rng=rng)
        x = rng.normal(size=(2, 3, 10, 10))
        expected = conv_reference(x, layer.filters, layer.biases, layer.pad)
        assert np.abs(layer.forward(x) - expected).max() < 1e-12

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError):
            Conv2D(1, 1, 4)

    def test_channel_mismatch_rejected(self):
        layer = Conv2D(2, 1, 3)
        with pytest.raises(ValueError):
            layer.forward(np.zeros((1, 3, 8, 8)))


class TestActivations:
    def test_leaky_relu_positive(self):
        assert LeakyReLU().forward(np.array([[2.0]]))[0, 0] == 2.0

    def test_leaky_relu_negative(self):
        assert LeakyReLU().forward(np.array([[-2.0]]))[0, 0] == pytest.approx(-0.02)

    def test_leaky_relu_zero(self):
        assert LeakyReLU().forward(np.array([[0.0]]))[0, 0] == 0.0

    def test_leaky_relu_derivative_pinned_at_zero(self):
        layer = LeakyReLU()
        layer.forward(np.array([[0.0, 1.0, -1.0]]))
        grad = layer.backward(np.ones((1, 3)))
        assert list(grad[0]) == [0.01, 1.0, 0.01]

    def test_relu(self):
        out = ReLU().forward(np.array([[-3.0, 0.0, 5.0]]))
        assert list(out[0]) == [0.0, 0.0, 5.0]


class TestMaxPool:
    def test_constant_input(self):
        out = MaxPool2x2().forward(np.full((1, 2, 6, 6), 3.5))
        assert out.shape == (1, 2, 3, 3)
        assert np.all(out == 3.5)

    def test_single_block(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
        assert MaxPool2x2().forward(x)[0, 0, 0, 0] == 4.0

    def test_matches_block_max_oracle(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(1, 3, 10, 10))
        out = MaxPool2x2().forward(x)
        for c in range(3):
            for i in range(5):
                for j in range(5):
                    assert out[0, c, i, j] == x[0, c, 2 * i:2 * i + 2, 2 * j:2 * j + 2].max()

    def test_odd_dimension_rejected(self):
        with pytest.raises(ValueError):
            MaxPool2x2().forward(np.zeros((1, 1, 5, 6)))

    def test_gradient_routes_to_argmax(self):
        x = np.array([[1.0, 2.0], [4.0, 3.0]]).reshape(1, 1, 2, 2)
        pool = MaxPool2x2()
        pool.forward(x)
        dx = pool.backward(np.array([[[[7.0]]]]))
        assert dx[0, 0, 1, 0] == 7.0
        assert dx.sum() == 7.0


class TestDense:
    def test_identity(self):
        layer = Dense(3, 3, rng=np.random.default_rng(0))
        layer.weights = np.eye(3)
        layer.biases[:] = 0.0
        x = np.array([[1.0, 2.0, 3.0]])
        assert np.array_equal(layer.forward(x), x)

    def test_zero_weights_give_bias(self):
        layer = Dense(4, 2, rng=np.random.default_rng(0))
        layer.weights[:] = 0.0
        layer.biases = np.array([5.0, -1.0])
        assert np.array_equal(layer.forward(np.ones((1, 4)))[0], layer.biases)

    def test_matches_hand_dot_products(self):
        rng = np.random.default_rng(5)
        layer = Dense(4, 3, rng=rng)
        x = rng.normal(size=(2, 4))
        out = layer.forward(x)
        for n in range(2):
            for j in range(3):
                expected = sum(layer.weights[j, i] * x[n, i] for i in range(4)) + layer.biases[j]
                assert abs(out[n, j] - expected) < 1e-14

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Dense(4, 2).forward(np.zeros((1, 5)))


class TestSoftmax:
    def test_uniform_for_zero_logits(self):
        out = Softmax().forward(np.zeros((1, 16)))
        assert np.allclose(out, 1 / 16, atol=1e-15)

    def test_overflow_safe(self):
        out = Softmax().forward(np.array([[1000.0, 0.0]]))
        assert np.isfinite(out).all()
        assert out[0, 0] == pytest.approx(1.0)
        assert out[0, 1] == pytest.approx(0.0, abs=1e-300)

    def test_matches_high_precision_oracle(self):
        logits = [1.0, 2.0, 3.0]
        out = Softmax().forward(np.array([logits]))
        with mpmath.workdps(60):
            exps = [mpmath.exp(v) for v in logits]
            total = mpmath.fsum(exps)
            expected = [float(e / total) for e in exps]
        assert np.abs(out[0] - np.array(expected)).max() < 1e-12

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(6)
        out = Softmax().forward(rng.normal(size=(20, 16)) * 10)
        assert np.abs(out.sum(axis=1) - 1.0).max() < 1e-12

    def test_shift_invariance(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(5, 16))
        a = Softmax().forward(x)
        b = Softmax().forward(x + 123.456)
        assert np.abs(a - b).max() < 1e-12


class TestCrossEntropy:
    def test_perfect_prediction_is_zero(self):
        probs = np.zeros((3, 16))
        labels = np.array([0, 5, 15])
        probs[np.arange(3), labels] = 1.0
        assert nn.cross_entropy_loss(probs, labels) == 0.0

    def test_uniform_prediction_is_log16(self):
        probs = np.full((4, 16), 1 / 16)
        loss = nn.cross_entropy_loss(probs, np.array([0, 1, 2, 3]))
        assert loss == pytest.approx(np.log(16.0), rel=1e-12)

    def test_matches_straight_line_oracle(self):
        rng = np.random.default_rng(8)
        raw = rng.random((6, 16))
        probs = raw / raw.sum(axis=1, keepdims=True)
        labels = rng.integers(0, 16, 6)
        expected = -sum(np.log(probs[i, labels[i]]) for i in range(6)) / 6
        assert nn.cross_entropy_loss(probs, labels) == pytest.approx(expected, rel=1e-12)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            nn.cross_entropy_loss(np.full((1, 16), 1 / 16), np.array([16]))

    def test_fused_gradient_is_p_minus_onehot(self):
        rng = np.random.default_rng(9)
        raw = rng.random((4, 16))
        probs = raw / raw.sum(axis=1, keepdims=True)
        labels = rng.integers(0, 16, 4)
        grad = nn.cross_entropy_grad_logits(probs, labels)
        onehot = np.zeros((4, 16))
        onehot[np.arange(4), labels] = 1.0
        assert np.allclose(grad, (probs - onehot) / 4, atol=1e-15)


class TestDropout:
    def test_rate_zero_identity(self):
        x = np.random.default_rng(0).normal(size=(4, 10))
        layer = Dropout(0.0)
        assert np.array_equal(layer.forward(x, training=True, rng=np.random.default_rng(1)), x)
        assert np.array_equal(layer.forward(x, training=False), x)

    def test_inference_identity_and_no_rng_use(self):
        x = np.random.default_rng(0).normal(size=(4, 10))
        rng = np.random.default_rng(2)
        before = rng.bit_generator.state
        out = Dropout(0.5).forward(x, training=False, rng=rng)
        assert np.array_equal(out, x)
        assert rng.bit_generator.state == before

    def test_statistics_and_survivor_scale(self):
        x = np.ones((1, 1_000_000))
        out = Dropout(0.5).forward(x, training=True, rng=np.random.default_rng(3))
        zero_fraction = (out == 0.0).mean()
        assert abs(zero_fraction - 0.5) < 0.005
        survivors = out[out != 0.0]
        assert np.all(survivors == 2.0)

    def test_invalid_rate_rejected(self):
        with pytest.raises(ValueError):
            Dropout(1.0)

    def test_training_requires_rng(self):
        with pytest.raises(ValueError):
            Dropout(0.5).forward(np.ones((1, 4)), training=True)


class TestBackwardGuards:
    @pytest.mark.parametrize("layer,grad", [
        (Conv2D(1, 1, 3), np.zeros((1, 1, 4, 4))),
        (Dense(4, 2), np.zeros((1, 2))),
        (LeakyReLU(), np.zeros((1, 4))),
        (ReLU(), np.zeros((1, 4))),
        (MaxPool2x2(), np.zeros((1, 1, 2, 2))),
        (Flatten(), np.zeros((1, 4))),
        (Softmax(), np.zeros((1, 4))),
    ])
    def test_backward_without_forward_raises(self, layer, grad):
        with pytest.raises(RuntimeError):
            layer.backward(grad)

    def test_zero_upstream_gradient_gives_zero_param_gradients(self):
        net = nn.build_cnn(np.random.default_rng(0))
        x = np.random.default_rng(1).normal(size=(2, 1, 20, 20))
        net.forward(x, training=False)
        net.backward(np.zeros((2, 16)))
        assert all(np.all(g == 0.0) for g in net.grads())
