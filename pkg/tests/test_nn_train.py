"""Adam optimizer, network assembly, training behavior, model persistence."""

import numpy as np
import pytest

from holomem import datapage as dp
from holomem import nn


def canonical_dataset(copies=10):
    pats = dp.canonical_patterns(10)
    x = np.repeat(pats, copies, axis=0).reshape(-1, 1, 20, 20)
    y = np.repeat(np.arange(16), copies)
    return x, y


def train_steps(net, x, y, steps, lr=1e-3, batch=100, rng=None):
    rng = rng or np.random.default_rng(0)
    n = 0
    while n < steps:
        idx = rng.integers(0, len(x), batch)
        probs = net.forward(x[idx], training=True, rng=rng)
        net.backward_from_logits(nn.cross_entropy_grad_logits(probs, y[idx]))
        nn.adam_step(net, net.grads(), lr)
        n += 1
    return net


class TestAdam:
    def test_zero_gradient_leaves_parameters_unchanged(self):
        params = [np.array([1.0, -2.0, 3.0])]
        opt = nn.Adam(params)
        before = params[0].copy()
        opt.step(params, [np.zeros(3)], lr=0.1)
        assert np.array_equal(params[0], before)

    def test_scalar_quadratic_matches_recurrence_oracle(self):
        # straight-line scalar recurrence for f(theta) = theta^2
        alpha, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        theta, m, v = 5.0, 0.0, 0.0
        for t in range(1, 501):
            g = 2.0 * theta
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            theta -= alpha * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        assert abs(theta) < 1e-2

        params = [np.array([5.0])]
        opt = nn.Adam(params)
        for _ in range(500):
            opt.step(params, [2.0 * params[0]], lr=alpha)
        assert abs(params[0][0]) < 1e-2
        assert params[0][0] == pytest.approx(theta, abs=1e-12)

    @pytest.mark.parametrize("g", [3.7, -0.2, 1e-4])
    def test_first_step_magnitude_is_learning_rate(self, g):
        params = [np.array([1.0])]
        opt = nn.Adam(params)
        opt.step(params, [np.array([g])], lr=1e-3)
        delta = params[0][0] - 1.0
        assert np.sign(delta) == -np.sign(g)
        assert abs(delta) == pytest.approx(1e-3, rel=1e-3)

    def test_shape_mismatch_rejected(self):
        params = [np.zeros(3)]
        opt = nn.Adam(params)
        with pytest.raises(ValueError):
            opt.step(params, [np.zeros(4)], lr=0.1)

    def test_step_counter_advances(self):
        net = nn.build_mlp(0, dense_units=8)
        x, y = canonical_dataset(1)
        train_steps(net, x, y, steps=7)
        assert net.adam.t == 7


class TestBuilders:
    def test_cnn_shape_trace_and_probabilities(self):
        net = nn.build_cnn(0)
        out = net.forward(np.zeros((3, 1, 20, 20)))
        assert out.shape == (3, 16)
        assert np.allclose(out.sum(axis=1), 1.0, atol=1e-12)
        assert ((out > 0) & (out < 1)).all()

    def test_cnn_parameter_count(self):
        # conv1 16*(1*5*5)+16 = 416; conv2 32*(16*3*3)+32 = 4640;
        # dense 800*128+128, 128*128+128, 128*16+16; total 126160
        net = nn.build_cnn(0)
        assert sum(p.size for p in net.params()) == 416 + 4640 + 102528 + 16512 + 2064
        assert sum(p.size for p in net.params()) == 126160

    def test_mlp_parameter_count(self):
        # 400*128+128 + 128*128+128 + 128*16+16 = 69904
        net = nn.build_mlp(0)
        assert sum(p.size for p in net.params()) == (400 * 128 + 128) + (128 * 128 + 128) + (128 * 16 + 16)
        assert sum(p.size for p in net.params()) == 69904

    def test_mlp_flattens_to_400(self):
        net = nn.build_mlp(0)
        out = net.forward(np.zeros((2, 1, 20, 20)))
        assert out.shape == (2, 16)

    def test_cnn_requires_pool_compatible_input(self):
        with pytest.raises(ValueError):
            nn.build_cnn(0, fragment_px=18)


class TestTrainingBehavior:
    def test_mlp_reaches_full_accuracy_on_canonical_patterns(self):
        x, y = canonical_dataset()
        rng = np.random.default_rng(0)
        net = nn.build_mlp(rng)
        for epoch in range(50):
            order = rng.permutation(len(x))
            for s in range(0, len(x), 100):
                idx = order[s:s + 100]
                probs = net.forward(x[idx], training=True, rng=rng)
                net.backward_from_logits(nn.cross_entropy_grad_logits(probs, y[idx]))
                nn.adam_step(net, net.grads(), 1e-3)
            if (net.predict(x) == y).mean() == 1.0:
                return
        pytest.fail("MLP did not reach 100% training accuracy in 50 epochs")

    def test_inference_forward_is_pure(self):
        net = nn.build_cnn(0)
        x = np.random.default_rng(1).normal(size=(2, 1, 20, 20))
        rng = np.random.default_rng(5)
        state_before = rng.bit_generator.state
        params_before = [p.copy() for p in net.params()]
        a = net.forward(x, training=False, rng=rng)
        b = net.forward(x, training=False, rng=rng)
        assert np.array_equal(a, b)
        assert rng.bit_generator.state == state_before
        assert all(np.array_equal(p, q) for p, q in zip(net.params(), params_before))

    def test_identical_seeds_give_identical_trajectories(self):
        x, y = canonical_dataset(2)

        def run():
            rng = np.random.default_rng(77)
            net = nn.build_cnn(rng, filters1=4, filters2=4, dense_units=16)
            order = rng.permutation(len(x))
            for s in range(0, len(x), 16):
                idx = order[s:s + 16]
                probs = net.forward(x[idx], training=True, rng=rng)
                net.backward_from_logits(nn.cross_entropy_grad_logits(probs, y[idx]))
                nn.adam_step(net, net.grads(), 1e-3)
            return net.params()

        a, b = run(), run()
        assert all(np.array_equal(p, q) for p, q in zip(a, b))

    def test_backward_from_logits_requires_softmax_tail(self):
        net = nn.Network([nn.Dense(4, 4)])
        with pytest.raises(ValueError):
            net.backward_from_logits(np.zeros((1, 4)))


class TestModelIO:
    def test_round_trip_preserves_parameters_and_outputs(self, tmp_path):
        net = nn.build_cnn(np.random.default_rng(3))
        path = tmp_path / "model.hmnet"
        nn.save_model(net, path)
        loaded = nn.load_model(path)
        assert all(np.array_equal(p, q) for p, q in zip(net.params(), loaded.params()))
        x = np.random.default_rng(4).normal(size=(2, 1, 20, 20))
        assert np.array_equal(net.forward(x), loaded.forward(x))

    def test_magic_bytes(self, tmp_path):
        net = nn.build_mlp(0, dense_units=8)
        path = tmp_path / "model.hmnet"
        nn.save_model(net, path)
        assert path.read_bytes()[:7] == b"HMNET1\x00"

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.hmnet"
        path.write_bytes(b"WRONG!!" + b"\x00" * 64)
        with pytest.raises(ValueError):
            nn.load_model(path)

    def test_summary_lists_layers(self, tmp_path):
        net = nn.build_cnn(0)
        path = tmp_path / "model.hmnet"
        nn.save_model(net, path)
        rows = nn.model_summary(path)
        kinds = [r["type"] for r in rows]
        assert kinds[0] == "conv" and kinds.count("conv") == 2
        assert kinds.count("dense") == 3 and kinds[-1] == "softmax"

    def test_optstate_resume_matches_uninterrupted_run(self, tmp_path):
        x, y = canonical_dataset(2)

        def fresh():
            return nn.build_mlp(np.random.default_rng(9), dense_units=16)

        # uninterrupted: 6 deterministic steps
        ref = fresh()
        rng = np.random.default_rng(1)
        train_steps(ref, x, y, steps=6, rng=rng)

        # interrupted after 3 steps, saved, reloaded, resumed
        net = fresh()
        rng = np.random.default_rng(1)
        train_steps(net, x, y, steps=3, rng=rng)
        nn.save_model(net, tmp_path / "m.hmnet")
        nn.save_optstate(net, tmp_path / "m.hmnet.optstate")
        resumed = nn.load_model(tmp_path / "m.hmnet")
        nn.load_optstate(resumed, tmp_path / "m.hmnet.optstate")
        assert resumed.adam.t == 3
        train_steps(resumed, x, y, steps=3, rng=rng)

        assert all(np.array_equal(p, q) for p, q in zip(ref.params(), resumed.params()))

    def test_optstate_architecture_mismatch_rejected(self, tmp_path):
        net = nn.build_mlp(0, dense_units=8)
        x, y = canonical_dataset(1)
        train_steps(net, x, y, steps=1)
        nn.save_optstate(net, tmp_path / "s.optstate")
        other = nn.build_mlp(0, dense_units=16)
        with pytest.raises(ValueError):
            nn.load_optstate(other, tmp_path / "s.optstate")
