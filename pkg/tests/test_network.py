"""Restoration network: forward pass, gradients, SGD and the weights file."""

import numpy as np
import pytest

from epilf.network import (
    BadMagicError,
    Network,
    TruncatedFileError,
    VersionMismatchError,
    WeightsFileError,
    forward,
    forward_batch,
    init_network,
    load_weights,
    loss_and_gradients,
    restore,
    save_weights,
    zero_network,
)
from epilf.training import TrainState, adam_step, sgd_step


def conv_reference(x, w, b):
    """Zero-padded cross-correlation with explicit loops; x is (C, H, W)."""
    cout, cin, k, _ = w.shape
    r = k // 2
    c, h, wd = x.shape
    xp = np.zeros((c, h + 2 * r, wd + 2 * r))
    xp[:, r:r + h, r:r + wd] = x
    out = np.zeros((cout, h, wd))
    for o in range(cout):
        for i in range(h):
            for j in range(wd):
                out[o, i, j] = np.sum(xp[:, i:i + k, j:j + k] * w[o]) + b[o]
    return out


def forward_reference(net, epi):
    a = epi[None]
    for layer, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = conv_reference(a, w, b)
        if layer < 2:
            a = np.maximum(a, 0)
    return a[0]


def small_net(seed, filters=(4, 3), std=0.2):
    net = init_network(seed, init_std=std, filters=filters)
    rng = np.random.default_rng(seed + 100)
    for b in net.biases:
        b[:] = rng.normal(0, 0.05, b.shape)
    return net


class TestInit:
    def test_same_seed_identical(self):
        a, b = init_network(42), init_network(42)
        for p, q in zip(a.params(), b.params()):
            assert p.tobytes() == q.tobytes()

    def test_shapes(self):
        net = init_network(0)
        assert [w.shape for w in net.weights] == [(64, 1, 9, 9), (32, 64, 5, 5), (1, 32, 5, 5)]

    def test_layer1_std(self):
        w = init_network(3).weights[0]
        assert abs(w.std() - 1e-3) < 0.2e-3

    def test_biases_zero(self):
        assert all(not b.any() for b in init_network(1).biases)

    def test_rejects_bad_std(self):
        with pytest.raises(ValueError):
            init_network(0, init_std=0.0)

    def test_architecture_validation(self):
        net = init_network(0)
        with pytest.raises(ValueError):
            Network(net.weights[:2], net.biases[:2])
        with pytest.raises(ValueError):
            Network(net.weights, [net.biases[0], net.biases[2], net.biases[1]])


class TestForward:
    def test_zero_net_gives_zero(self):
        x = np.random.default_rng(0).random((9, 17))
        assert not forward(zero_network(), x).any()

    @pytest.mark.parametrize("shape", [(1, 1), (3, 2), (9, 17), (17, 40)])
    def test_shape_preserved(self, shape):
        x = np.random.default_rng(0).random(shape)
        assert forward(init_network(0), x).shape == shape

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(5)
        net = small_net(1)
        x = rng.random((17, 17))
        np.testing.assert_allclose(forward(net, x), forward_reference(net, x), atol=1e-10)

    def test_batch_equals_single(self):
        rng = np.random.default_rng(6)
        net = small_net(2)
        x = rng.random((3, 9, 17))
        batch = forward_batch(net, x)
        for i in range(3):
            np.testing.assert_allclose(batch[i], forward(net, x[i]), atol=1e-13)

    def test_activations_returned(self):
        net = small_net(3)
        out, acts = forward(net, np.ones((5, 6)), keep_activations=True)
        assert out.shape == (5, 6)
        assert [a.shape for a in acts] == [(5, 6, 4), (5, 6, 3)]
        assert min(a.min() for a in acts) >= 0.0

    def test_rejects_multichannel(self):
        with pytest.raises(ValueError):
            forward(init_network(0), np.zeros((3, 5, 5)))

    def test_restore_adds_residual(self):
        net = small_net(4)
        x = np.random.default_rng(1).random((9, 17))
        np.testing.assert_array_equal(restore(net, x) - x, (x + forward(net, x)) - x)
        np.testing.assert_array_equal(restore(zero_network(), x), x)

    def test_restore_does_not_clamp(self):
        net = zero_network()
        net.biases[2][:] = 5.0
        assert restore(net, np.zeros((3, 3))).max() == 5.0


class TestGradients:
    def test_zero_net_zero_targets(self):
        net = zero_network(filters=(2, 2))
        loss, grads = loss_and_gradients(net, np.random.default_rng(0).random((2, 5, 7)), np.zeros((2, 5, 7)))
        assert loss == 0.0
        assert all(not g.any() for g in grads)

    def test_loss_definition(self):
        net = small_net(7)
        rng = np.random.default_rng(8)
        x, t = rng.random((3, 6, 9)), rng.random((3, 6, 9))
        expect = np.mean([np.sum((t[i] - forward(net, x[i])) ** 2) for i in range(3)])
        assert loss_and_gradients(net, x, t)[0] == pytest.approx(expect, rel=1e-12)

    def test_finite_differences(self):
        net = small_net(11, filters=(2, 2), std=0.3)
        rng = np.random.default_rng(12)
        x, t = rng.random((2, 7, 9)), rng.normal(0, 0.3, (2, 7, 9))
        _, grads = loss_and_gradients(net, x, t)
        worst = 0.0
        h = 1e-5
        for p, g in zip(net.params(), grads):
            for idx in np.ndindex(p.shape):
                keep = p[idx]
                p[idx] = keep + h
                up = loss_and_gradients(net, x, t)[0]
                p[idx] = keep - h
                down = loss_and_gradients(net, x, t)[0]
                p[idx] = keep
                fd = (up - down) / (2 * h)
                worst = max(worst, abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-8))
        assert worst < 1e-5

    def test_duplicating_batch_is_invariant(self):
        net = small_net(13)
        rng = np.random.default_rng(14)
        x, t = rng.random((2, 5, 8)), rng.random((2, 5, 8))
        l1, g1 = loss_and_gradients(net, x, t)
        l2, g2 = loss_and_gradients(net, np.concatenate([x, x]), np.concatenate([t, t]))
        assert l1 == pytest.approx(l2, rel=1e-12)
        for a, b in zip(g1, g2):
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-14)

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            loss_and_gradients(small_net(0), np.zeros((0, 3, 3)), np.zeros((0, 3, 3)))


class TestSGD:
    def _scalar_net(self):
        return small_net(0, filters=(1, 1))

    def test_plain_descent_without_momentum(self):
        net = self._scalar_net()
        before = [p.copy() for p in net.params()]
        grads = [np.ones_like(p) for p in before]
        state = TrainState.for_network(net, momentum=0.0)
        sgd_step(net, grads, state, 0.1)
        for p, b in zip(net.params(), before):
            np.testing.assert_allclose(p, b - 0.1, atol=1e-15)
        assert state.iteration == 1

    def test_two_steps_closed_form(self):
        net = self._scalar_net()
        before = [p.copy() for p in net.params()]
        g = [np.full_like(p, 0.5) for p in before]
        state = TrainState.for_network(net, momentum=0.9)
        sgd_step(net, g, state, 0.01)
        sgd_step(net, g, state, 0.01)
        for p, b in zip(net.params(), before):
            np.testing.assert_allclose(p - b, -0.01 * 0.5 * (2 + 0.9), atol=1e-15)

    def test_matches_scalar_reference(self):
        net = self._scalar_net()
        rng = np.random.default_rng(9)
        ref_w = [p.ravel().tolist() for p in net.params()]
        ref_v = [[0.0] * len(w) for w in ref_w]
        state = TrainState.for_network(net, momentum=0.9)
        for _ in range(100):
            grads = [rng.normal(size=p.shape) for p in net.params()]
            lr = float(rng.uniform(1e-4, 1e-2))
            sgd_step(net, grads, state, lr)
            for k, g in enumerate(grads):
                for j, gj in enumerate(g.ravel()):
                    ref_v[k][j] = 0.9 * ref_v[k][j] - lr * gj
                    ref_w[k][j] = ref_w[k][j] + ref_v[k][j]
        for p, w in zip(net.params(), ref_w):
            np.testing.assert_allclose(p.ravel(), w, atol=1e-12)

    def test_shape_mismatch(self):
        net = self._scalar_net()
        state = TrainState.for_network(net, 0.9)
        with pytest.raises(ValueError):
            sgd_step(net, [np.zeros(1)] * 6, state, 0.1)

    def test_rejects_non_positive_lr(self):
        net = self._scalar_net()
        state = TrainState.for_network(net, 0.9)
        with pytest.raises(ValueError):
            sgd_step(net, [np.zeros_like(p) for p in net.params()], state, 0.0)


class TestAdam:
    def test_first_step_is_sign_of_gradient(self):
        net = small_net(0, filters=(1, 1))
        before = [p.copy() for p in net.params()]
        rng = np.random.default_rng(3)
        grads = [rng.normal(size=p.shape) for p in before]
        state = TrainState.for_network(net)
        adam_step(net, grads, state, 1e-3, eps=0.0)
        for p, b, g in zip(net.params(), before, grads):
            np.testing.assert_allclose(p - b, -1e-3 * np.sign(g), atol=1e-15)
        assert state.iteration == 1

    def test_matches_scalar_reference(self):
        net = small_net(0, filters=(1, 1)).astype(np.float64)
        rng = np.random.default_rng(10)
        b1, b2, eps = 0.9, 0.999, 1e-8
        ref_w = [p.ravel().tolist() for p in net.params()]
        ref_m = [[0.0] * len(w) for w in ref_w]
        ref_v = [[0.0] * len(w) for w in ref_w]
        state = TrainState.for_network(net)
        for t in range(1, 51):
            grads = [rng.normal(size=p.shape) for p in net.params()]
            adam_step(net, grads, state, 1e-3, (b1, b2), eps)
            for k, g in enumerate(grads):
                for j, gj in enumerate(g.ravel()):
                    ref_m[k][j] = b1 * ref_m[k][j] + (1 - b1) * gj
                    ref_v[k][j] = b2 * ref_v[k][j] + (1 - b2) * gj * gj
                    m_hat = ref_m[k][j] / (1 - b1 ** t)
                    v_hat = ref_v[k][j] / (1 - b2 ** t)
                    ref_w[k][j] -= 1e-3 * m_hat / (v_hat ** 0.5 + eps)
        for p, w in zip(net.params(), ref_w):
            np.testing.assert_allclose(p.ravel(), w, atol=1e-9)

    def test_rejects_non_positive_lr(self):
        net = small_net(0, filters=(1, 1))
        with pytest.raises(ValueError):
            adam_step(net, [np.zeros_like(p) for p in net.params()], TrainState.for_network(net), 0.0)


class TestWeightsFile:
    def test_size(self, tmp_path):
        save_weights(init_network(0), tmp_path / "w.bin")
        header = 7 + 8 + 3 * 16
        params = 64 * 81 + 64 + 32 * 64 * 25 + 32 + 32 * 25 + 1
        assert (tmp_path / "w.bin").stat().st_size == header + 4 * params

    def test_round_trip_bit_exact(self, tmp_path):
        net = init_network(5, dtype=np.float32)
        net.biases[1][:] = np.linspace(-1, 1, 32, dtype=np.float32)
        save_weights(net, tmp_path / "a.bin")
        back = load_weights(tmp_path / "a.bin")
        for p, q in zip(net.params(), back.params()):
            assert p.tobytes() == q.tobytes()
        save_weights(back, tmp_path / "b.bin")
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()

    def test_header_layout(self, tmp_path):
        save_weights(init_network(0), tmp_path / "w.bin")
        raw = (tmp_path / "w.bin").read_bytes()
        assert raw[:7] == b"EPICNN\x01"
        assert np.frombuffer(raw[7:15], "<u4").tolist() == [1, 3]
        assert np.frombuffer(raw[15:31], "<u4").tolist() == [64, 1, 9, 9]

    def test_bad_magic(self, tmp_path):
        save_weights(init_network(0), tmp_path / "w.bin")
        raw = bytearray((tmp_path / "w.bin").read_bytes())
        raw[0] = ord("X")
        (tmp_path / "w.bin").write_bytes(bytes(raw))
        with pytest.raises(BadMagicError):
            load_weights(tmp_path / "w.bin")

    def test_version_mismatch(self, tmp_path):
        save_weights(init_network(0), tmp_path / "w.bin")
        raw = bytearray((tmp_path / "w.bin").read_bytes())
        raw[7] = 2
        (tmp_path / "w.bin").write_bytes(bytes(raw))
        with pytest.raises(VersionMismatchError):
            load_weights(tmp_path / "w.bin")

    def test_truncated(self, tmp_path):
        save_weights(init_network(0), tmp_path / "w.bin")
        raw = (tmp_path / "w.bin").read_bytes()
        (tmp_path / "w.bin").write_bytes(raw[:-10])
        with pytest.raises(TruncatedFileError):
            load_weights(tmp_path / "w.bin")

    def test_trailing_bytes(self, tmp_path):
        save_weights(init_network(0), tmp_path / "w.bin")
        with open(tmp_path / "w.bin", "ab") as fh:
            fh.write(b"\0")
        with pytest.raises(WeightsFileError):
            load_weights(tmp_path / "w.bin")
