import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dqnsched.mdp import encode
from dqnsched.network import (
    NetworkParams,
    OptimizerState,
    apply_update,
    batch_td_gradient,
    clip_error,
    clone_params,
    forward,
    init_network,
    load_checkpoint,
    save_checkpoint,
    td_gradient,
)
from oracles import central_difference


def random_network(rng, sizes):
    """Network with O(1) weights so gradients are far from the init scale."""
    params = init_network(sizes, 0)
    for w, b in zip(params.weights, params.biases):
        w[...] = rng.normal(size=w.shape)
        b[...] = rng.normal(scale=0.5, size=b.shape)
    return params


def half_sq_loss(params, obs, action, target):
    return 0.5 * (target - forward(params, obs)[action]) ** 2


def assert_matches_fd(grads, fd, rel=1e-4, floor=1e-8):
    for g_arr, fd_arr in zip(grads.arrays(), fd):
        # ascent gradient is minus the loss gradient
        err = np.abs(g_arr + fd_arr)
        scale = np.maximum(np.abs(g_arr), np.abs(fd_arr))
        assert np.all((err <= floor) | (err <= rel * scale)), (g_arr, -fd_arr)


class TestInit:
    def test_shapes(self):
        p = init_network([3, 2], seed=7)
        assert len(p.weights) == 1 and p.weights[0].shape == (2, 3)
        np.testing.assert_array_equal(p.biases[0], [0.0, 0.0])

    def test_deterministic(self):
        assert init_network([5, 24, 24, 2], 3) == init_network([5, 24, 24, 2], 3)

    def test_scale_bound(self):
        for s in range(100):
            p = init_network([6, 24, 24, 2], s)
            for i in range(6):
                assert np.all(np.abs(forward(p, encode(i, 6))) < 0.1)
            for w in p.weights:
                assert np.all(np.abs(w) <= 0.05 / math.sqrt(w.shape[1]))

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            init_network([], 0)
        with pytest.raises(ValueError):
            init_network([3], 0)
        with pytest.raises(ValueError):
            init_network([3, 0, 2], 0)


class TestForward:
    def test_zero_hidden_gives_output_bias(self):
        p = init_network([4, 5, 3], 0)
        p.weights[0][...] = 0.0
        p.biases[1][...] = [0.3, -0.2, 0.7]
        np.testing.assert_array_equal(forward(p, np.ones(4)), [0.3, -0.2, 0.7])

    def test_linear_layer_selects_column(self):
        p = init_network([3, 2], 1)
        p.biases[0][...] = [0.5, -0.5]
        np.testing.assert_array_equal(forward(p, encode(1, 3)), p.weights[0][:, 1] + p.biases[0])

    def test_output_scaling(self):
        p = random_network(np.random.default_rng(0), [3, 4, 2])
        p.biases[-1][...] = 0.0
        x = np.array([0.2, -1.0, 0.4])
        before = forward(p, x)
        p.weights[-1] *= 2.0
        np.testing.assert_allclose(forward(p, x), 2.0 * before, rtol=1e-15)

    def test_batch_matches_rows(self):
        p = random_network(np.random.default_rng(1), [3, 4, 2])
        xs = np.random.default_rng(2).normal(size=(5, 3))
        batch = forward(p, xs)
        for x, row in zip(xs, batch):
            np.testing.assert_allclose(forward(p, x), row, rtol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            forward(init_network([3, 2], 0), np.ones(4))


class TestTDGradient:
    def test_zero_error(self):
        p = random_network(np.random.default_rng(0), [3, 4, 2])
        x = encode(1, 3)
        grads, delta = td_gradient(p, x, 0, forward(p, x)[0])
        assert delta == 0.0
        assert all(np.all(g == 0.0) for g in grads.arrays())

    def test_clip_definition(self):
        assert clip_error(2.5, 1.0) == 1.0
        assert clip_error(-2.5, 1.0) == -1.0
        assert clip_error(0.3, 1.0) == 0.3
        p = init_network([3, 2], 0)
        _, delta = td_gradient(p, encode(0, 3), 1, forward(p, encode(0, 3))[1] + 2.5, clip=1.0)
        assert delta == 1.0

    def test_finite_differences_anchor(self):
        rng = np.random.default_rng(0)
        p = init_network([3, 4, 2], seed=0)
        obs = rng.normal(size=3)
        target = 1.3
        grads, _ = td_gradient(p, obs, 1, target)
        fd = central_difference(lambda: half_sq_loss(p, obs, 1, target), p.arrays())
        assert_matches_fd(grads, fd)

    def test_finite_differences_random_cases(self):
        rng = np.random.default_rng(2024)
        for _ in range(20):
            depth = rng.integers(1, 4)
            sizes = [int(rng.integers(2, 6))] + [int(rng.integers(2, 7)) for _ in range(depth)]
            p = random_network(rng, sizes)
            obs = rng.normal(size=sizes[0])
            action = int(rng.integers(sizes[-1]))
            target = float(rng.normal(scale=3.0))
            grads, _ = td_gradient(p, obs, action, target)
            fd = central_difference(lambda: half_sq_loss(p, obs, action, target), p.arrays())
            assert_matches_fd(grads, fd)

    def test_unselected_outputs_get_no_gradient(self):
        p = random_network(np.random.default_rng(5), [3, 4, 3])
        grads, _ = td_gradient(p, np.ones(3), 1, 10.0)
        assert np.all(grads.weights[-1][[0, 2]] == 0.0)
        assert np.all(grads.biases[-1][[0, 2]] == 0.0)

    def test_batch_gradient_is_mean(self):
        rng = np.random.default_rng(8)
        p = random_network(rng, [4, 6, 3])
        xs = rng.normal(size=(8, 4))
        acts = rng.integers(0, 3, size=8)
        targets = rng.normal(size=8)
        batch, deltas = batch_td_gradient(p, xs, acts, targets, clip=1.0)
        singles = [td_gradient(p, x, int(a), float(t), clip=1.0) for x, a, t in zip(xs, acts, targets)]
        for k, arr in enumerate(batch.arrays()):
            mean = np.mean([g.arrays()[k] for g, _ in singles], axis=0)
            np.testing.assert_allclose(arr, mean, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(deltas, [d for _, d in singles])

    def test_rejects_non_finite_target(self):
        with pytest.raises(ValueError):
            td_gradient(init_network([3, 2], 0), encode(0, 3), 0, float("nan"))

    @given(st.floats(-1e6, 1e6), st.floats(1e-3, 1e3))
    def test_clipping_shrinks_and_keeps_sign(self, delta, clip):
        c = clip_error(delta, clip)
        assert abs(c) <= abs(delta)
        assert np.sign(c) == np.sign(delta)

    def test_small_sgd_step_decreases_loss(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            p = random_network(rng, [3, 5, 2])
            obs, action, target = rng.normal(size=3), int(rng.integers(2)), float(rng.normal())
            before = half_sq_loss(p, obs, action, target)
            grads, delta = td_gradient(p, obs, action, target)
            if delta == 0.0:
                continue
            apply_update(p, grads, 1e-3, OptimizerState("sgd"))
            assert half_sq_loss(p, obs, action, target) < before


def scalar_params(value):
    return NetworkParams([np.array([[value]])], [np.array([0.0])])


class TestApplyUpdate:
    def test_sgd_scalar(self):
        p = scalar_params(1.0)
        apply_update(p, scalar_params(0.5), 0.1, OptimizerState("sgd"))
        assert p.weights[0][0, 0] == pytest.approx(1.05)

    def test_rmsprop_scalar(self):
        p = scalar_params(0.0)
        opt = OptimizerState("rmsprop", decay=0.95, eps_stab=0.01)
        apply_update(p, scalar_params(1.0), 0.1, opt)
        assert opt.accumulator[0][0, 0] == pytest.approx(0.05)
        assert p.weights[0][0, 0] == pytest.approx(0.1 / math.sqrt(0.06))
        assert p.weights[0][0, 0] == pytest.approx(0.4082, abs=1e-4)

    def test_zero_gradient(self):
        p = scalar_params(2.0)
        opt = OptimizerState("rmsprop", decay=0.5)
        apply_update(p, scalar_params(1.0), 0.1, opt)
        theta, acc = p.weights[0][0, 0], opt.accumulator[0][0, 0]
        apply_update(p, scalar_params(0.0), 0.1, opt)
        assert p.weights[0][0, 0] == theta
        assert opt.accumulator[0][0, 0] == 0.5 * acc

    def test_rejects_non_positive_alpha(self):
        with pytest.raises(ValueError):
            apply_update(scalar_params(0.0), scalar_params(1.0), 0.0, OptimizerState("sgd"))

    def test_accumulator_non_negative(self):
        rng = np.random.default_rng(3)
        p = random_network(rng, [3, 4, 2])
        opt = OptimizerState()
        for _ in range(50):
            g, _ = td_gradient(p, rng.normal(size=3), int(rng.integers(2)), float(rng.normal()))
            apply_update(p, g, 0.01, opt)
        assert all(np.all(a >= 0) for a in opt.accumulator)

    def test_identical_trajectories(self):
        def trajectory():
            rng = np.random.default_rng(4)
            p = init_network([3, 8, 2], 9)
            opt = OptimizerState()
            for _ in range(30):
                g, _ = td_gradient(p, rng.normal(size=3), int(rng.integers(2)), float(rng.normal()))
                apply_update(p, g, 0.01, opt)
            return p

        assert trajectory() == trajectory()


class TestClone:
    def test_clone_is_independent(self):
        rng = np.random.default_rng(0)
        p = random_network(rng, [3, 4, 2])
        c = clone_params(p)
        assert c == p
        xs = rng.normal(size=(100, 3))
        np.testing.assert_array_equal(forward(c, xs), forward(p, xs))
        before = forward(c, xs)
        g, _ = td_gradient(p, xs[0], 0, 5.0)
        apply_update(p, g, 0.5, OptimizerState("sgd"))
        np.testing.assert_array_equal(forward(c, xs), before)
        assert c != p


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        p = random_network(np.random.default_rng(6), [5, 7, 3, 2])
        path = tmp_path / "net.ckpt"
        save_checkpoint(p, path)
        q = load_checkpoint(path)
        assert q == p
        assert q.layer_sizes == [5, 7, 3, 2]
        assert all(a.tobytes() == b.tobytes() for a, b in zip(p.arrays(), q.arrays()))

    def test_layout(self, tmp_path):
        p = init_network([2, 1], 0)
        p.weights[0][...] = [[1.5, -2.0]]
        p.biases[0][...] = [0.25]
        path = tmp_path / "tiny.ckpt"
        save_checkpoint(p, path)
        raw = path.read_bytes()
        assert raw[:8] == b"DQNCKPT1"
        np.testing.assert_array_equal(np.frombuffer(raw[8:32], "<i8"), [2, 2, 1])
        np.testing.assert_array_equal(np.frombuffer(raw[32:], "<f8"), [1.5, -2.0, 0.25])

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ValueError):
            load_checkpoint(path)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.integers(1, 6), min_size=2, max_size=4), st.integers(0, 2**31))
    def test_round_trip_property(self, tmp_path_factory, sizes, seed):
        p = random_network(np.random.default_rng(seed), sizes)
        path = tmp_path_factory.mktemp("ck") / "p.ckpt"
        save_checkpoint(p, path)
        assert load_checkpoint(path) == p
