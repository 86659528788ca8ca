import numpy as np
import pytest

from sawlab import nn
from sawlab.nn import AdamState, Gradient, Mlp, adam_step, polyak_update


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)


class TestForward:
    def test_zero_parameters_give_zero_output(self):
        net = Mlp([3, 4, 2], rng=0)
        net.set_flat(np.zeros(net.n_params))
        assert np.array_equal(net.forward(np.array([1.0, -2.0, 0.5])), np.zeros(2))

    def test_identity_single_layer(self):
        net = Mlp([3, 3], rng=0)
        net.weights[0] = np.eye(3)
        net.biases[0] = np.zeros(3)
        x = np.array([0.3, -1.2, 4.0])
        assert np.array_equal(net.forward(x), x)

    def test_hand_evaluated_2_2_1(self):
        # independent oracle: scalar-by-scalar evaluation of the same net
        net = Mlp([2, 2, 1], rng=0)
        net.weights[0] = np.array([[0.5, -1.0], [2.0, 0.25]])
        net.biases[0] = np.array([0.1, -0.3])
        net.weights[1] = np.array([[1.5, -0.5]])
        net.biases[1] = np.array([0.2])
        x1, x2 = 1.0, -1.0
        h1 = max(0.5 * x1 + (-1.0) * x2 + 0.1, 0.0)
        h2 = max(2.0 * x1 + 0.25 * x2 + (-0.3), 0.0)
        expected = 1.5 * h1 + (-0.5) * h2 + 0.2
        out = net.forward(np.array([x1, x2]))
        assert out.shape == (1,)
        assert out[0] == pytest.approx(expected, abs=1e-15)

    def test_forward_is_pure(self):
        net = Mlp([4, 16, 3], rng=5)
        x = np.random.default_rng(1).normal(size=(7, 4))
        first = net.forward(x)
        for _ in range(3):
            assert np.array_equal(net.forward(x), first)

    def test_dimension_mismatch_rejected(self):
        net = Mlp([3, 4, 2], rng=0)
        with pytest.raises(ValueError):
            net.forward(np.zeros((5, 4)))

    def test_tanh_head_stays_within_scale(self):
        net = Mlp([2, 8, 2], output_activation="tanh", output_scale=0.5, rng=2)
        x = np.random.default_rng(0).normal(scale=10.0, size=(50, 2))
        y = net.forward(x)
        assert np.all(np.abs(y) <= 0.5)


class TestBackward:
    def test_zero_upstream_gives_zero_gradient(self):
        net = Mlp([3, 5, 2], rng=1)
        x = np.random.default_rng(0).normal(size=(4, 3))
        grad = net.backward(x, np.zeros((4, 2)))
        assert np.array_equal(grad.flat(), np.zeros(net.n_params))

    def test_linear_regression_closed_form(self):
        # single linear layer, squared loss: grad_W = 2 (pred - target) x^T
        net = Mlp([3, 1], rng=0)
        rng = np.random.default_rng(2)
        x = rng.normal(size=(6, 3))
        target = rng.normal(size=(6, 1))
        pred = net.forward(x)
        grad = net.backward(x, 2.0 * (pred - target))
        expected_w = 2.0 * (pred - target).T @ x
        expected_b = 2.0 * (pred - target).sum(axis=0)
        assert np.allclose(grad.weights[0], expected_w, atol=1e-12)
        assert np.allclose(grad.biases[0], expected_b, atol=1e-12)

    @pytest.mark.parametrize("activation,scale", [("identity", 1.0), ("tanh", 0.7)])
    def test_matches_finite_differences(self, activation, scale):
        net = Mlp([3, 8, 6, 2], output_activation=activation,
                  output_scale=scale, rng=11)
        rng = np.random.default_rng(3)
        x = rng.normal(size=(5, 3))
        target = rng.normal(size=(5, 2))
        y, cache = net.forward_cache(x)
        # keep clear of relu kinks so central differences are clean
        assert all(np.abs(z).min() > 1e-4 for z in cache[1][:-1])

        def loss():
            return float(np.sum((net.forward(x) - target) ** 2))

        grad = net.backward_cached(cache, 2.0 * (y - target))
        fd = nn.finite_difference_gradient(loss, net, eps=1e-5)
        assert rel_err(grad.flat(), fd) < 1e-4

    def test_input_gradient_matches_finite_differences(self):
        net = Mlp([4, 8, 3], rng=7)
        rng = np.random.default_rng(4)
        x = rng.normal(size=(3, 4))
        upstream = rng.normal(size=(3, 3))
        _, cache = net.forward_cache(x)
        gin = net.input_backward_cached(cache, upstream)
        fd = np.zeros_like(x)
        eps = 1e-6
        for i in range(x.shape[0]):
            for j in range(x.shape[1]):
                xp, xm = x.copy(), x.copy()
                xp[i, j] += eps
                xm[i, j] -= eps
                fd[i, j] = (np.sum(upstream * net.forward(xp))
                            - np.sum(upstream * net.forward(xm))) / (2 * eps)
        assert rel_err(gin, fd) < 1e-6

    def test_non_finite_upstream_rejected(self):
        net = Mlp([2, 3, 1], rng=0)
        x = np.zeros((2, 2))
        bad = np.array([[np.nan], [0.0]])
        with pytest.raises(ValueError):
            net.backward(x, bad)


class TestAdam:
    def test_zero_gradient_keeps_parameters(self):
        net = Mlp([2, 4, 1], rng=3)
        before = net.get_flat()
        state = AdamState(net, learning_rate=1e-3)
        adam_step(net, state, Gradient.zeros_like(net))
        assert np.array_equal(net.get_flat(), before)
        assert state.step_count == 1

    def test_first_step_matches_hand_computation(self):
        # scalar parameter, constant gradient g: hand-evaluate the
        # bias-corrected formulas for the very first update
        net = Mlp([1, 1], rng=0)
        net.weights[0] = np.array([[2.0]])
        net.biases[0] = np.array([0.0])
        lr, g = 1e-3, 0.5
        state = AdamState(net, learning_rate=lr)
        grad = Gradient([np.array([[g]])], [np.array([0.0])])
        adam_step(net, state, grad)
        m_hat = (0.1 * g) / 0.1
        v_hat = (0.001 * g * g) / 0.001
        expected = 2.0 - lr * m_hat / (np.sqrt(v_hat) + 1e-8)
        assert net.weights[0][0, 0] == pytest.approx(expected, abs=1e-18)

    def test_two_runs_are_bit_identical(self):
        def run():
            net = Mlp([3, 8, 2], rng=9)
            state = AdamState(net, learning_rate=3e-4)
            rng = np.random.default_rng(0)
            x = rng.normal(size=(4, 3))
            t = rng.normal(size=(4, 2))
            for _ in range(5):
                pred = net.forward(x)
                grad = net.backward(x, 2.0 * (pred - t))
                adam_step(net, state, grad)
            return net.get_flat()

        assert np.array_equal(run(), run())

    def test_non_finite_gradient_rejected(self):
        net = Mlp([2, 2], rng=0)
        state = AdamState(net)
        grad = Gradient.zeros_like(net)
        grad.weights[0][0, 0] = np.inf
        with pytest.raises(ValueError):
            adam_step(net, state, grad)

    def test_shape_mismatch_rejected(self):
        net = Mlp([2, 2], rng=0)
        state = AdamState(net)
        grad = Gradient([np.zeros((3, 2))], [np.zeros(2)])
        with pytest.raises(ValueError):
            adam_step(net, state, grad)


class TestPolyak:
    def test_rate_zero_keeps_target(self):
        target, online = Mlp([2, 4, 1], rng=0), Mlp([2, 4, 1], rng=1)
        before = target.get_flat()
        polyak_update(target, online, 0.0)
        assert np.array_equal(target.get_flat(), before)

    def test_rate_one_copies_online(self):
        target, online = Mlp([2, 4, 1], rng=0), Mlp([2, 4, 1], rng=1)
        polyak_update(target, online, 1.0)
        assert np.array_equal(target.get_flat(), online.get_flat())

    def test_scalar_value(self):
        target, online = Mlp([1, 1], rng=0), Mlp([1, 1], rng=0)
        target.weights[0][:] = 1.0
        online.weights[0][:] = 0.0
        polyak_update(target, online, 0.005)
        assert target.weights[0][0, 0] == pytest.approx(0.995, abs=1e-15)

    def test_geometric_convergence(self):
        target, online = Mlp([3, 6, 2], rng=2), Mlp([3, 6, 2], rng=4)
        rate = 0.25
        gap = np.linalg.norm(target.get_flat() - online.get_flat())
        for _ in range(20):
            polyak_update(target, online, rate)
            new_gap = np.linalg.norm(target.get_flat() - online.get_flat())
            assert new_gap == pytest.approx((1 - rate) * gap, rel=1e-12)
            gap = new_gap

    def test_architecture_mismatch_rejected(self):
        with pytest.raises(ValueError):
            polyak_update(Mlp([2, 3, 1], rng=0), Mlp([2, 4, 1], rng=0), 0.5)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        nets = [Mlp([2, 4, 1], rng=0),
                Mlp([3, 5, 2], output_activation="tanh", output_scale=2.0, rng=1)]
        path = tmp_path / "params.ckpt"
        arch = {"networks": [n.describe() for n in nets]}
        nn.save_checkpoint(path, nets, arch, seed=7, step=123)
        header, flat = nn.load_checkpoint(path)
        assert header["seed"] == 7 and header["step"] == 123
        assert np.array_equal(flat, np.concatenate([n.get_flat() for n in nets]))
        rebuilt = [Mlp.from_description(d) for d in header["architecture"]["networks"]]
        i = 0
        for net, orig in zip(rebuilt, nets):
            net.set_flat(flat[i:i + net.n_params])
            i += net.n_params
            x = np.random.default_rng(0).normal(size=(3, net.in_dim))
            assert np.array_equal(net.forward(x), orig.forward(x))

    def test_header_is_single_json_line(self, tmp_path):
        import json
        net = Mlp([2, 3, 1], rng=0)
        path = tmp_path / "p.ckpt"
        nn.save_checkpoint(path, [net], {"networks": [net.describe()]}, 0, 0)
        with open(path, "rb") as fh:
            line = fh.readline()
            payload = fh.read()
        json.loads(line.decode("utf-8"))
        assert len(payload) == 8 * net.n_params


class TestInit:
    def test_default_width_and_bounds(self):
        net = Mlp([2, 256, 256, 1], rng=0)
        assert [w.shape for w in net.weights] == [(256, 2), (256, 256), (1, 256)]
        for w, fan_in in zip(net.weights, [2, 256, 256]):
            assert np.abs(w).max() <= 1.0 / np.sqrt(fan_in)

    def test_seeded_init_reproducible(self):
        assert np.array_equal(Mlp([3, 8, 2], rng=42).get_flat(),
                              Mlp([3, 8, 2], rng=42).get_flat())

    def test_bad_dims_rejected(self):
        with pytest.raises(ValueError):
            Mlp([3], rng=0)
        with pytest.raises(ValueError):
            Mlp([3, 0, 1], rng=0)
