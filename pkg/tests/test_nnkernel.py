"""Kernel checks: layer oracles, losses, optimizer, schedule, training loop."""

import numpy as np
import pytest

import romforge.nnkernel as nk
from romforge.nnkernel import (
    Adam,
    BatchNorm,
    Conv2d,
    Dropout,
    Flatten,
    LeakyReLU,
    Linear,
    MissingContext,
    NonFiniteLoss,
    OneCycleSchedule,
    Reshape,
    Sequential,
    ShapeMismatch,
    Sigmoid,
    StepOutOfRange,
    Tensor,
    Upsample2x,
    bce_loss,
    bce_with_logits_loss,
    fit,
    grad_check,
    mse_loss,
)


class TestTensor:
    def test_accumulate(self):
        t = Tensor(np.zeros((2, 2), np.float32))
        t.accumulate(np.ones((2, 2), np.float32))
        t.accumulate(np.ones((2, 2), np.float32))
        np.testing.assert_array_equal(t.grad, 2 * np.ones((2, 2)))
        t.zero_grad()
        np.testing.assert_array_equal(t.grad, np.zeros((2, 2)))

    def test_accumulate_shape_checked(self):
        t = Tensor(np.zeros((2, 2), np.float32))
        with pytest.raises(ValueError):
            t.accumulate(np.ones(3, np.float32))


class TestConv2d:
    def test_hand_oracle_same_padding(self):
        conv = Conv2d(1, 1, kernel_size=3, stride=1)
        conv.weight.data[...] = 1.0
        conv.bias.data[...] = 0.5
        x = np.arange(9, dtype=np.float32).reshape(1, 1, 3, 3)
        y = conv.forward(x)
        assert y.shape == (1, 1, 3, 3)
        assert y[0, 0, 1, 1] == pytest.approx(36.5)
        assert y[0, 0, 0, 0] == pytest.approx(8.5)  # 0 + 1 + 3 + 4 + bias

    def test_stride_two_offsets(self):
        conv = Conv2d(1, 1, kernel_size=3, stride=2)
        conv.weight.data[...] = 1.0
        x = np.arange(9, dtype=np.float32).reshape(1, 1, 3, 3)
        y = conv.forward(x)
        assert y.shape == (1, 1, 2, 2)
        np.testing.assert_allclose(y[0, 0], [[8.0, 12.0], [20.0, 24.0]])

    def test_chunked_path_matches(self, monkeypatch):
        rng = np.random.default_rng(0)
        conv = Conv2d(3, 4, kernel_size=5, stride=2, rng=rng)
        x = rng.normal(size=(7, 3, 12, 12)).astype(np.float32)
        whole = conv.forward(x)
        g = rng.normal(size=whole.shape).astype(np.float32)
        conv.weight.zero_grad()
        conv.bias.zero_grad()
        dx_whole = conv.backward(g)
        dw_whole = conv.weight.grad.copy()
        # force per-sample chunking
        monkeypatch.setattr("romforge.nnkernel.layers.COL_BUDGET", 1)
        chunked = conv.forward(x)
        conv.weight.zero_grad()
        conv.bias.zero_grad()
        dx_chunked = conv.backward(g)
        np.testing.assert_allclose(chunked, whole, rtol=1e-6, atol=1e-6)
        np.testing.assert_allclose(dx_chunked, dx_whole, rtol=1e-5, atol=1e-6)
        np.testing.assert_allclose(conv.weight.grad, dw_whole, rtol=1e-4,
                                   atol=1e-5)

    def test_input_validation(self):
        conv = Conv2d(2, 3, kernel_size=3)
        with pytest.raises(ShapeMismatch):
            conv.forward(np.zeros((1, 1, 4, 4), np.float32))
        with pytest.raises(ValueError):
            Conv2d(1, 1, kernel_size=4)
        with pytest.raises(MissingContext):
            Conv2d(1, 1).backward(np.zeros((1, 1, 2, 2), np.float32))


class TestLinear:
    def test_hand_oracle(self):
        lin = Linear(2, 2)
        lin.weight.data[...] = [[1.0, 2.0], [3.0, 4.0]]
        lin.bias.data[...] = [0.5, -0.5]
        y = lin.forward(np.array([[1.0, 1.0]], np.float32))
        np.testing.assert_allclose(y, [[4.5, 5.5]])

    def test_backward_accumulates(self):
        lin = Linear(2, 1)
        lin.weight.data[...] = [[2.0], [3.0]]
        x = np.array([[1.0, 2.0]], np.float32)
        lin.forward(x)
        dx = lin.backward(np.array([[1.0]], np.float32))
        np.testing.assert_allclose(dx, [[2.0, 3.0]])
        np.testing.assert_allclose(lin.weight.grad, [[1.0], [2.0]])
        np.testing.assert_allclose(lin.bias.grad, [1.0])


class TestBatchNorm:
    def test_training_normalizes(self):
        bn = BatchNorm(2)
        rng = np.random.default_rng(1)
        x = rng.normal(3.0, 2.0, size=(8, 2, 4, 4)).astype(np.float32)
        y = bn.forward(x, training=True)
        assert np.abs(y.mean(axis=(0, 2, 3))).max() < 1e-5
        assert np.abs(y.var(axis=(0, 2, 3)) - 1.0).max() < 1e-4

    def test_running_stats_update(self):
        bn = BatchNorm(1, momentum=0.1)
        x = np.array([1.0, 2.0, 3.0, 4.0], np.float32).reshape(1, 1, 2, 2)
        bn.forward(x, training=True)
        # biased mean 2.5; unbiased variance of {1..4} is 5/3
        assert bn.running_mean[0] == pytest.approx(0.9 * 0.0 + 0.1 * 2.5)
        assert bn.running_var[0] == pytest.approx(0.9 * 1.0 + 0.1 * 5.0 / 3.0,
                                                  rel=1e-5)

    def test_eval_uses_running(self):
        bn = BatchNorm(1)
        bn.running_mean[...] = 2.0
        bn.running_var[...] = 4.0
        x = np.full((1, 1, 1, 1), 4.0, np.float32)
        y = bn.forward(x, training=False)
        assert y[0, 0, 0, 0] == pytest.approx((4.0 - 2.0) / np.sqrt(4.0 + 1e-5),
                                              rel=1e-6)


class TestActivations:
    def test_leaky_relu(self):
        act = LeakyReLU()
        x = np.array([[-2.0, 3.0]], np.float32)
        np.testing.assert_allclose(act.forward(x), [[-0.02, 3.0]])
        np.testing.assert_allclose(act.backward(np.ones((1, 2), np.float32)),
                                   [[0.01, 1.0]])

    def test_sigmoid_extremes_stable(self):
        s = Sigmoid()
        with np.errstate(over="raise"):
            y = s.forward(np.array([[-1000.0, 0.0, 1000.0]]))
        np.testing.assert_allclose(y, [[0.0, 0.5, 1.0]], atol=1e-12)


class TestDropout:
    def net(self, rate=0.5):
        return Sequential([Dropout(rate)])

    def test_inverted_scaling(self):
        net = self.net(0.25)
        net.seed_dropout(0)
        x = np.ones((200, 50), np.float32)
        y = net.forward(x, training=True)
        kept = y[y > 0]
        assert np.allclose(kept, 1.0 / 0.75)
        assert abs(y.mean() - 1.0) < 0.05

    def test_eval_identity(self):
        net = self.net()
        x = np.ones((3, 3), np.float32)
        np.testing.assert_array_equal(net.forward(x, training=False), x)

    def test_seeded_masks_reproduce(self):
        x = np.ones((4, 8), np.float32)
        a, b = self.net(), self.net()
        a.seed_dropout(9)
        b.seed_dropout(9)
        np.testing.assert_array_equal(a.forward(x, training=True),
                                      b.forward(x, training=True))

    def test_unseeded_training_rejected(self):
        with pytest.raises(MissingContext):
            Dropout(0.5).forward(np.ones((2, 2), np.float32), training=True)

    def test_identity_backward_after_eval_forward(self):
        d = Dropout(0.5)
        d.forward(np.ones((2, 2), np.float32), training=False)
        g = np.full((2, 2), 3.0, np.float32)
        np.testing.assert_array_equal(d.backward(g), g)

    def test_rate_validation(self):
        with pytest.raises(ValueError):
            Dropout(1.0)
        with pytest.raises(ValueError):
            Dropout(-0.1)


class TestShapeLayers:
    def test_upsample_forward_backward(self):
        up = Upsample2x()
        x = np.array([[1.0, 2.0], [3.0, 4.0]], np.float32).reshape(1, 1, 2, 2)
        y = up.forward(x)
        np.testing.assert_array_equal(
            y[0, 0], [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]
        )
        dx = up.backward(np.ones_like(y))
        np.testing.assert_array_equal(dx[0, 0], [[4.0, 4.0], [4.0, 4.0]])

    def test_flatten_reshape_round_trip(self):
        x = np.arange(24, dtype=np.float32).reshape(2, 3, 2, 2)
        flat = Flatten()
        y = flat.forward(x)
        assert y.shape == (2, 12)
        np.testing.assert_array_equal(flat.backward(y), x)
        resh = Reshape((3, 2, 2))
        z = resh.forward(y)
        np.testing.assert_array_equal(z, x)
        with pytest.raises(ShapeMismatch):
            Reshape((4, 2)).forward(np.zeros((1, 9), np.float32))


class TestLosses:
    def test_mse_hand_case(self):
        value, grad = mse_loss(np.array([0.0, 2.0]), np.array([1.0, 4.0]))
        assert value == 2.5
        np.testing.assert_allclose(grad, [-1.0, -2.0])

    def test_bce_hand_cases(self):
        value, _ = bce_loss(np.array([0.5]), np.array([1.0]))
        assert value == pytest.approx(np.log(2.0), abs=1e-9)
        value, _ = bce_loss(np.array([0.9]), np.array([1.0]))
        assert value == pytest.approx(-np.log(0.9), abs=1e-9)

    def test_bce_with_logits_matches_plain(self):
        rng = np.random.default_rng(2)
        z = rng.normal(size=(5, 7)).astype(np.float64)
        t = (rng.random((5, 7)) > 0.5).astype(np.float64)
        p = 1.0 / (1.0 + np.exp(-z))
        fused, fused_grad = bce_with_logits_loss(z, t)
        plain, _ = bce_loss(p, t)
        assert fused == pytest.approx(plain, rel=1e-9)
        np.testing.assert_allclose(fused_grad, (p - t) / z.size, atol=1e-12)

    def test_bce_with_logits_extremes(self):
        with np.errstate(over="raise"):
            value, grad = bce_with_logits_loss(
                np.array([1000.0, -1000.0]), np.array([0.0, 1.0])
            )
        assert value == pytest.approx(1000.0)
        assert np.all(np.isfinite(grad))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mse_loss(np.zeros(2), np.zeros(3))


class TestAdam:
    def test_first_step_is_signed_lr(self):
        p = Tensor(np.zeros(3, np.float64))
        p.grad = np.array([3.0, -0.01, 500.0])
        Adam([p]).step(lr=0.1)
        np.testing.assert_allclose(p.data, [-0.1, 0.1, -0.1], rtol=1e-5)

    def test_two_steps_match_hand_formula(self):
        p = Tensor(np.array([1.0]))
        opt = Adam([p])
        m = v = 0.0
        x = 1.0
        for t, g in zip((1, 2), (4.0, -2.0)):
            p.grad = np.array([g])
            opt.step(lr=0.01)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            x -= 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
            assert p.data[0] == pytest.approx(x, rel=1e-12)


class TestOneCycle:
    def test_endpoints_and_peak(self):
        sched = OneCycleSchedule(max_lr=1.0, total_steps=100)
        assert sched.lr(0) == pytest.approx(1.0 / 25.0)
        assert sched.peak_step == 30
        assert sched.lr(30) == pytest.approx(1.0)
        assert sched.lr(100) == pytest.approx(1e-4)

    def test_monotone_each_side(self):
        sched = OneCycleSchedule(max_lr=3e-3, total_steps=100)
        values = [sched.lr(s) for s in range(101)]
        peak = sched.peak_step
        assert all(a < b for a, b in zip(values[:peak], values[1:peak + 1]))
        assert all(a > b for a, b in zip(values[peak:-1], values[peak + 1:]))

    def test_step_bounds(self):
        sched = OneCycleSchedule(max_lr=1.0, total_steps=10)
        with pytest.raises(StepOutOfRange):
            sched.lr(-1)
        with pytest.raises(StepOutOfRange):
            sched.lr(11)

    def test_validation(self):
        with pytest.raises(ValueError):
            OneCycleSchedule(max_lr=0.0, total_steps=10)
        with pytest.raises(ValueError):
            OneCycleSchedule(max_lr=1.0, total_steps=0)


def tiny_mlp(seed=0, in_dim=3, out_dim=2, hidden=16):
    rng = np.random.default_rng(seed)
    return Sequential([
        Linear(in_dim, hidden, rng=rng),
        LeakyReLU(),
        Linear(hidden, out_dim, rng=rng),
    ])


def linear_problem(n=64, seed=1):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3)).astype(np.float32)
    w = np.array([[1.0, -2.0], [0.5, 0.0], [-1.0, 1.0]], np.float32)
    y = x @ w + 0.3
    return x, y


class TestSequential:
    def test_state_dict_round_trip(self):
        net = tiny_mlp(seed=3)
        x = np.random.default_rng(0).normal(size=(4, 3)).astype(np.float32)
        ref = net.forward(x)
        rebuilt = Sequential.from_architecture(net.architecture())
        rebuilt.load_state_dict(net.state_dict())
        np.testing.assert_array_equal(rebuilt.forward(x), ref)

    def test_load_state_dict_strict(self):
        net = tiny_mlp()
        state = net.state_dict()
        extra = dict(state, bogus=np.zeros(1))
        with pytest.raises(KeyError):
            net.load_state_dict(extra)
        state.pop(next(iter(state)))
        with pytest.raises(KeyError):
            net.load_state_dict(state)

    def test_astype_preserves_values(self):
        net = Sequential([
            Conv2d(1, 2, kernel_size=3, rng=np.random.default_rng(0)),
            BatchNorm(2),
            LeakyReLU(),
        ])
        x = np.random.default_rng(1).normal(size=(2, 1, 4, 4)).astype(np.float32)
        y32 = net.forward(x)
        net64 = net.astype(np.float64)
        y64 = net64.forward(x.astype(np.float64))
        assert y64.dtype == np.float64
        np.testing.assert_allclose(y64, y32, atol=1e-6)

    def test_unseeded_build_starts_at_zero(self):
        net = Sequential.from_architecture(tiny_mlp().architecture())
        assert all(np.all(p.data == 0.0) for p in net.params())


class TestFit:
    def test_loss_decreases(self):
        x, y = linear_problem()
        net = tiny_mlp(seed=5)
        report = fit(net, x, y, loss="mse", epochs=40, batch_size=16,
                     max_lr=1e-2, seed=0)
        assert report.final_train_loss < 0.05 * report.train_losses[0]
        assert len(report.train_losses) == 40

    def test_deterministic(self):
        x, y = linear_problem()
        outs = []
        for _ in range(2):
            net = tiny_mlp(seed=5)
            fit(net, x, y, loss="mse", epochs=5, batch_size=16, max_lr=1e-3,
                seed=7)
            outs.append(net.forward(x))
        np.testing.assert_array_equal(outs[0], outs[1])

    def test_validation_tracking(self):
        x, y = linear_problem()
        net = tiny_mlp(seed=5)
        report = fit(net, x[:48], y[:48], loss="mse", epochs=10, batch_size=16,
                     max_lr=1e-3, seed=0, val_inputs=x[48:], val_targets=y[48:])
        assert len(report.val_losses) == 10
        assert report.best_val_loss == min(report.val_losses)
        assert report.val_losses[report.best_val_epoch] == report.best_val_loss

    def test_restore_best(self):
        x, y = linear_problem()
        net = tiny_mlp(seed=5)
        report = fit(net, x[:48], y[:48], loss="mse", epochs=15, batch_size=16,
                     max_lr=3e-2, seed=0, val_inputs=x[48:], val_targets=y[48:],
                     restore_best=True)
        from romforge.nnkernel.train import evaluate_loss
        final_val = evaluate_loss(net, x[48:], y[48:], loss="mse")
        assert final_val == pytest.approx(report.best_val_loss, rel=1e-6)

    def test_non_finite_loss_raised(self):
        x, y = linear_problem()
        net = tiny_mlp(seed=5)
        with np.errstate(over="ignore"), pytest.raises(NonFiniteLoss):
            fit(net, x, y, loss="mse", epochs=3, batch_size=16, max_lr=1e25,
                seed=0)

    def test_fused_bce_with_sigmoid_tail(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(32, 3)).astype(np.float32)
        t = (x[:, :1] > 0).astype(np.float32)
        net = Sequential([Linear(3, 8, rng=rng), LeakyReLU(),
                          Linear(8, 1, rng=rng), Sigmoid()])
        report = fit(net, x, t, loss="bce", epochs=30, batch_size=8,
                     max_lr=1e-2, seed=0)
        assert report.final_train_loss < report.train_losses[0]
        probs = net.forward(x)
        assert np.all((probs >= 0.0) & (probs <= 1.0))

    def test_input_validation(self):
        x, y = linear_problem()
        with pytest.raises(ValueError):
            fit(tiny_mlp(), x, y[:10], loss="mse", epochs=1, batch_size=8,
                max_lr=1e-3, seed=0)
        with pytest.raises(ValueError):
            fit(tiny_mlp(), x, y, loss="mse", epochs=0, batch_size=8,
                max_lr=1e-3, seed=0)
        with pytest.raises(ValueError):
            fit(tiny_mlp(), x, y, loss="mse", epochs=1, batch_size=8,
                max_lr=1e-3, seed=0, restore_best=True)


class TestGradCheck:
    def test_linear_stack(self):
        net = tiny_mlp(seed=2, hidden=6)
        x = np.random.default_rng(0).normal(size=(3, 3))
        assert grad_check(net, x) < 1e-6

    def test_conv_stack_with_batchnorm(self):
        rng = np.random.default_rng(1)
        net = Sequential([
            Conv2d(1, 3, kernel_size=3, stride=2, rng=rng),
            BatchNorm(3),
            LeakyReLU(),
            Flatten(),
            Linear(3 * 2 * 2, 4, rng=rng),
        ])
        x = rng.normal(size=(2, 1, 4, 4))
        assert grad_check(net, x) < 1e-6

    def test_bce_logits_loss_path(self):
        rng = np.random.default_rng(2)
        net = Sequential([Linear(4, 3, rng=rng)])
        x = rng.normal(size=(3, 4))
        t = (rng.random((3, 3)) > 0.5).astype(np.float64)
        assert grad_check(net, x, target=t, loss="bce_logits") < 1e-6

    def test_rejects_active_dropout(self):
        net = Sequential([Linear(2, 2, rng=np.random.default_rng(0)),
                          Dropout(0.5)])
        with pytest.raises(ValueError):
            grad_check(net, np.zeros((1, 2)))


def test_public_names_exported():
    for name in ("Tensor", "Sequential", "Conv2d", "Linear", "BatchNorm",
                 "LeakyReLU", "Sigmoid", "Dropout", "Upsample2x", "Flatten",
                 "Reshape", "Adam", "OneCycleSchedule", "fit", "grad_check",
                 "mse_loss", "bce_loss", "bce_with_logits_loss", "TrainReport",
                 "NonFiniteLoss", "MissingContext", "ShapeMismatch",
                 "StepOutOfRange"):
        assert hasattr(nk, name)
