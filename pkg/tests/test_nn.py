import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from usguide import nn
from usguide.errors import (
    InvalidHyperparameterError,
    InvalidLabelError,
    ShapeError,
    StateError,
    TruncatedFileError,
    VersionError,
)


def make_net(stack, in_shape, seed=0):
    store = nn.ParamStore(seed)
    net = nn.Network(stack, in_shape)
    net.init_params(store, np.random.default_rng(seed))
    return net, store


class TestForward:
    def test_relu(self):
        net, store = make_net([nn.relu()], (3,))
        y = net.forward(store, np.array([[-1.0, 0.0, 2.0]], np.float32))
        assert np.array_equal(y[0], [0.0, 0.0, 2.0])

    def test_softmax_symmetry(self):
        net, store = make_net([nn.softmax()], (2,))
        y = net.forward(store, np.zeros((1, 2), np.float32))
        assert np.allclose(y[0], [0.5, 0.5])

    def test_identity_kernel_conv(self):
        stack = [nn.conv2d(1, 1, 3)]
        store = nn.ParamStore()
        w = np.zeros((3, 3, 1, 1), np.float32)
        w[1, 1, 0, 0] = 1.0
        store.add("0.w", w)
        store.add("0.b", np.zeros(1, np.float32))
        x = np.random.default_rng(0).random((1, 7, 7, 1)).astype(np.float32)
        y = nn.Network(stack, (7, 7, 1)).forward(store, x)
        assert np.allclose(y[0, 1:-1, 1:-1], x[0, 1:-1, 1:-1])

    def test_shape_mismatch_raises(self):
        net, store = make_net([nn.linear(4, 2)], (4,))
        with pytest.raises(ShapeError):
            net.forward(store, np.zeros((1, 5), np.float32))

    def test_forward_does_not_mutate_input(self):
        net, store = make_net([nn.relu(), nn.linear(3, 2)], (3,))
        x = np.array([[-1.0, 0.5, 2.0]], np.float32)
        orig = x.copy()
        net.forward(store, x)
        assert np.array_equal(x, orig)

    @given(st.lists(st.floats(-20, 20), min_size=2, max_size=8))
    def test_softmax_is_probability_vector(self, logits):
        p = nn.softmax_probs(np.array(logits))
        assert (p >= 0).all()
        assert abs(p.sum() - 1.0) < 1e-6


class TestCrossEntropy:
    def test_uniform_logits(self):
        assert nn.loss_cross_entropy([0.0, 0.0], 1) == pytest.approx(np.log(2))

    def test_confident_correct(self):
        # analytic: -log sigmoid(20) = log(1 + e^-20)
        expected = np.log1p(np.exp(-20.0))
        assert nn.loss_cross_entropy([10.0, -10.0], 0) == pytest.approx(expected, rel=1e-6)

    def test_confident_wrong(self):
        expected = np.log1p(np.exp(20.0))
        assert nn.loss_cross_entropy([10.0, -10.0], 1) == pytest.approx(expected, rel=1e-6)

    def test_bad_label(self):
        with pytest.raises(InvalidLabelError):
            nn.loss_cross_entropy([0.0, 0.0], 2)


class TestBackward:
    def test_linear_chain_rule(self):
        # y = w*x + b, loss = y, x = 2 -> dL/dw = 2
        stack = [nn.linear(1, 1)]
        store = nn.ParamStore()
        store.add("0.w", np.array([[3.0]], np.float32))
        store.add("0.b", np.zeros(1, np.float32))
        net = nn.Network(stack, (1,))
        net.forward(store, np.array([[2.0]], np.float32))
        net.backward(store, np.ones((1, 1), np.float32))
        assert store.grads["0.w"][0, 0] == pytest.approx(2.0)

    def test_zero_input_conv_grads(self):
        net, store = make_net([nn.conv2d(1, 2)], (6, 6, 1))
        net.forward(store, np.zeros((1, 6, 6, 1), np.float32))
        net.backward(store, np.ones((1, 6, 6, 2), np.float32))
        assert np.all(store.grads["0.w"] == 0)
        assert np.all(store.grads["0.b"] != 0)

    def test_backward_before_forward(self):
        net, store = make_net([nn.relu()], (3,))
        with pytest.raises(StateError):
            net.backward(store, np.ones((1, 3), np.float32))


class TestGradCheck:
    def test_composed_conv_net(self):
        stack = [nn.conv2d(1, 3), nn.relu(), nn.maxpool2x2(),
                 nn.conv2d(3, 4), nn.relu(), nn.flatten(),
                 nn.linear(4 * 16, 8), nn.relu(), nn.linear(8, 2)]
        net, store = make_net(stack, (8, 8, 1), seed=3)
        x = np.random.default_rng(3).standard_normal((8, 8, 1))
        assert nn.grad_check(stack, store, x) < 1e-2

    def test_linear_net_tight(self):
        stack = [nn.linear(6, 5), nn.linear(5, 2)]
        net, store = make_net(stack, (6,), seed=1)
        x = np.random.default_rng(1).standard_normal(6)
        assert nn.grad_check(stack, store, x) < 1e-4

    @pytest.mark.parametrize("stack,in_shape", [
        ([nn.conv2d(2, 3)], (5, 5, 2)),
        ([nn.conv2d(1, 2, 3, 2)], (6, 6, 1)),
        ([nn.maxpool2x2(), nn.flatten(), nn.linear(8, 2)], (4, 4, 2)),
        ([nn.relu(), nn.linear(4, 2)], (4,)),
        ([nn.linear(4, 3), nn.softmax()], (4,)),
        ([nn.flatten(), nn.linear(12, 2)], (2, 2, 3)),
    ])
    def test_each_layer_kind(self, stack, in_shape):
        net, store = make_net(stack, in_shape, seed=5)
        x = np.random.default_rng(5).standard_normal(in_shape)
        assert nn.grad_check(stack, store, x) < 1e-2


class TestSgd:
    def test_update_rule(self):
        store = nn.ParamStore()
        store.add("p", np.array([1.0], np.float32))
        store.grads["p"][:] = 2.0
        nn.sgd_step(store, 0.001)
        assert store.params["p"][0] == pytest.approx(0.998)
        assert store.grads["p"][0] == 0.0

    def test_rejects_nonpositive_lr(self):
        store = nn.ParamStore()
        store.add("p", np.ones(1, np.float32))
        with pytest.raises(InvalidHyperparameterError):
            nn.sgd_step(store, 0.0)

    def test_training_determinism(self):
        def run():
            stack = [nn.linear(4, 8), nn.relu(), nn.linear(8, 2)]
            net, store = make_net(stack, (4,), seed=7)
            rng = np.random.default_rng(7)
            x = rng.standard_normal((40, 4)).astype(np.float32)
            y = (x[:, 0] > 0).astype(np.int64)
            for lo in range(0, 40, 10):
                logits = net.forward(store, x[lo:lo + 10])
                _, d = nn.cross_entropy_batch(logits, y[lo:lo + 10])
                net.backward(store, d)
                nn.sgd_step(store, 0.01)
            return store

        assert run().allclose_bitwise(run())

    def test_loss_decreases_on_separable_set(self):
        stack = [nn.linear(2, 2)]
        net, store = make_net(stack, (2,), seed=0)
        rng = np.random.default_rng(0)
        x = rng.standard_normal((100, 2)).astype(np.float32)
        y = (x[:, 0] + 0.5 * x[:, 1] > 0).astype(np.int64)  # margin set
        first, _ = nn.cross_entropy_batch(net.forward(store, x), y)
        for lo in range(0, 100, 10):
            logits = net.forward(store, x[lo:lo + 10])
            _, d = nn.cross_entropy_batch(logits, y[lo:lo + 10])
            net.backward(store, d)
            nn.sgd_step(store, 0.01)
        after, _ = nn.cross_entropy_batch(net.forward(store, x), y)
        assert after < first


class TestSerialization:
    def test_round_trip_bitwise(self):
        net, store = make_net([nn.conv2d(1, 2), nn.flatten(),
                               nn.linear(2 * 16, 3)], (4, 4, 1), seed=9)
        buf = io.BytesIO()
        nn.save_params(store, buf)
        restored = nn.load_params(buf.getvalue())
        assert store.allclose_bitwise(restored)

    def test_bad_magic(self):
        with pytest.raises(VersionError):
            nn.load_params(b"XXXXX" + b"\x00" * 16)

    def test_truncated(self):
        net, store = make_net([nn.linear(3, 2)], (3,))
        data = nn.save_params(store, io.BytesIO())
        with pytest.raises(TruncatedFileError):
            nn.load_params(data[:-5])
