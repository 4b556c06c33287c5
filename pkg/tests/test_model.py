import math

import numpy as np
import pytest

from ordreg import (Encoding, EncodingKind, MlpConfig, ModelParams, OptimState, OrdinalScale, TrainConfig,
                    TrainingDivergedError, adamw_step, backward, cosine_lr, encode_labels, forward,
                    init_params, mse_loss, train)
from ordreg.data import Dataset
from ordreg.errors import ConfigError, DataError, ShapeError
from ordreg.model import fit, load_checkpoint, save_checkpoint

from oracles import forward_oracle


def random_params(dims, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)
    return ModelParams([rng.normal(0, scale, size=(a, b)) for a, b in zip(dims[:-1], dims[1:])],
                       [rng.normal(0, 0.1, size=b) for b in dims[1:]])


def max_relative_fd_error(params, x, y, h=1e-5):
    _, grads = backward(params, x, y)
    worst = 0.0
    for p, g in zip(params.arrays(), grads.arrays()):
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            up = mse_loss(forward(params, x), y)
            p[idx] = orig - h
            down = mse_loss(forward(params, x), y)
            p[idx] = orig
            num = (up - down) / (2 * h)
            denom = max(abs(num), abs(g[idx]), 1e-8)
            worst = max(worst, abs(num - g[idx]) / denom)
    return worst


class TestForward:
    def test_zero_params(self):
        params = ModelParams([np.zeros((3, 4)), np.zeros((4, 2))], [np.zeros(4), np.zeros(2)])
        np.testing.assert_array_equal(forward(params, [1.0, -2.0, 3.0]), np.zeros(2))

    def test_identity_layer(self):
        params = ModelParams([np.eye(3)], [np.zeros(3)])
        x = np.array([0.5, -1.5, 2.0])
        np.testing.assert_array_equal(forward(params, x), x)

    def test_matches_loop_oracle(self):
        dims = (5, 7, 6, 3)
        params = random_params(dims, seed=1)
        rng = np.random.default_rng(2)
        for x in rng.normal(size=(10, 5)):
            want = forward_oracle([w.tolist() for w in params.weights], [b.tolist() for b in params.biases], x)
            np.testing.assert_allclose(forward(params, x), want, atol=1e-12, rtol=0)

    def test_batch_equals_rows(self):
        params = random_params((4, 8, 2), seed=3)
        x = np.random.default_rng(4).normal(size=(6, 4))
        batch = forward(params, x)
        for i in range(6):
            np.testing.assert_allclose(batch[i], forward(params, x[i]), atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            forward(random_params((4, 3)), np.zeros(5))


class TestLoss:
    def test_examples(self):
        assert mse_loss([0.3, 0.7], [0.3, 0.7]) == 0.0
        assert mse_loss([1.0, 0.0], [0.0, 0.0]) == 0.5

    def test_vs_loop(self):
        rng = np.random.default_rng(5)
        y, t = rng.normal(size=(4, 6)), rng.normal(size=(4, 6))
        want = sum((a - b) ** 2 for ra, rb in zip(y.tolist(), t.tolist()) for a, b in zip(ra, rb)) / 24
        assert abs(mse_loss(y, t) - want) <= 1e-12

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            mse_loss([1.0, 2.0], [1.0])


class TestBackward:
    def test_zero_residual_gives_zero_gradients(self):
        params = random_params((3, 5, 2), seed=6)
        x = np.random.default_rng(7).normal(size=(4, 3))
        loss, grads = backward(params, x, forward(params, x))
        assert loss == 0.0
        assert all(np.all(g == 0) for g in grads.arrays())

    def test_finite_differences(self):
        params = random_params((4, 6, 5, 3), seed=8)
        rng = np.random.default_rng(9)
        x, y = rng.normal(size=(8, 4)), rng.normal(size=(8, 3))
        assert max_relative_fd_error(params, x, y) <= 1e-4

    def test_duplicated_batch_same_gradient(self):
        params = random_params((3, 4, 2), seed=10)
        rng = np.random.default_rng(11)
        x, y = rng.normal(size=(5, 3)), rng.normal(size=(5, 2))
        _, g1 = backward(params, x, y)
        _, g2 = backward(params, np.vstack([x, x]), np.vstack([y, y]))
        for a, b in zip(g1.arrays(), g2.arrays()):
            np.testing.assert_allclose(a, b, atol=1e-14)

    def test_target_shape_checked(self):
        with pytest.raises(ShapeError):
            backward(random_params((3, 2)), np.zeros((4, 3)), np.zeros((4, 3)))


class TestSchedule:
    def make(self, T=100, hi=5e-4, lo=1e-5):
        return OptimState.create(random_params((2, 2)), T, lr_max=hi, lr_min=lo)

    def test_endpoints_and_midpoint(self):
        s = self.make()
        assert cosine_lr(s, 0) == 5e-4
        assert cosine_lr(s, 100) == 1e-5
        assert cosine_lr(s, 50) == pytest.approx((5e-4 + 1e-5) / 2, rel=1e-14)

    def test_clamps_after_end(self):
        assert cosine_lr(self.make(), 250) == 1e-5

    def test_non_increasing(self):
        s = self.make(T=37)
        lrs = [cosine_lr(s, t) for t in range(38)]
        assert all(b <= a for a, b in zip(lrs, lrs[1:]))


class TestAdamW:
    def test_zero_grad_no_decay_is_noop(self):
        params = random_params((3, 2), seed=12)
        state = OptimState.create(params, 10, lr_max=1e-2, weight_decay=0.0)
        state2, new = adamw_step(state, params, params.zeros_like())
        for a, b in zip(params.arrays(), new.arrays()):
            np.testing.assert_array_equal(a, b)
        assert state2.t == 1

    def test_zero_grad_pure_decay(self):
        params = random_params((3, 2), seed=13)
        state = OptimState.create(params, 10, lr_max=1e-2, weight_decay=0.1)
        _, new = adamw_step(state, params, params.zeros_like())
        for a, b in zip(params.arrays(), new.arrays()):
            np.testing.assert_allclose(b, a * (1 - 1e-2 * 0.1), rtol=1e-15)

    def test_scalar_hand_computation(self):
        theta, g, lr, lam = 0.8, -0.3, 1e-3, 0.01
        b1, b2, eps = 0.9, 0.999, 1e-8
        params = ModelParams([np.array([[theta]])], [np.array([0.0])])
        grads = ModelParams([np.array([[g]])], [np.array([0.0])])
        state = OptimState.create(params, total_steps=1, lr_max=lr, weight_decay=lam)
        state, new = adamw_step(state, params, grads)
        m_hat = (1 - b1) * g / (1 - b1)
        v_hat = (1 - b2) * g * g / (1 - b2)
        want = theta - lr * m_hat / (math.sqrt(v_hat) + eps) - lr * lam * theta
        assert abs(new.weights[0][0, 0] - want) <= 1e-12
        # second step runs at the end of the single-step schedule
        assert cosine_lr(state, state.t) == 0.0

    def test_non_finite_gradient_aborts(self):
        params = random_params((2, 2))
        grads = params.zeros_like()
        grads.weights[0][0, 0] = np.nan
        with pytest.raises(TrainingDivergedError):
            adamw_step(OptimState.create(params, 5), params, grads)


def memorization_set():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(8, 6))
    labels = np.array([[1], [2], [3], [4], [5], [1], [3], [5]])
    return x, labels


class TestTraining:
    def test_memorizes_eight_samples(self):
        x, labels = memorization_set()
        y = encode_labels(Encoding("soft_progress_bar"), OrdinalScale(), labels)
        cfg = MlpConfig(6, (64, 64), y.shape[1], init_seed=0)
        res = fit(cfg, TrainConfig(lr_max=1e-3, epochs=500, seed=0), x, y)
        assert res.loss_history[-1] < 1e-3
        assert all(b <= a for a, b in zip(res.loss_history, res.loss_history[1:]))

    def test_deterministic(self):
        x, labels = memorization_set()
        ds = Dataset(np.arange(8), x, labels, ("f",))
        cfg = MlpConfig(6, (16,), 5, init_seed=3)
        tc = TrainConfig(batch_size=3, epochs=20, seed=4)
        a = train(cfg, tc, ds, Encoding("gaussian"), OrdinalScale())
        b = train(cfg, tc, ds, Encoding("gaussian"), OrdinalScale())
        assert np.array(a.loss_history).tobytes() == np.array(b.loss_history).tobytes()
        assert all(np.array_equal(p, q) for p, q in zip(a.params.arrays(), b.params.arrays()))

    def test_step_count(self):
        x, labels = memorization_set()
        y = encode_labels(Encoding("one_hot"), OrdinalScale(), labels)
        res = fit(MlpConfig(6, (4,), 5), TrainConfig(batch_size=3, epochs=7), x, y)
        assert len(res.loss_history) == 7

    def test_rejects_zero_epochs(self):
        with pytest.raises(ConfigError):
            TrainConfig(epochs=0)

    def test_rejects_empty_dataset(self):
        ds = Dataset(np.zeros(0), np.zeros((0, 6)), np.zeros((0, 1)), ("f",))
        with pytest.raises(DataError):
            train(MlpConfig(6, (4,), 5), TrainConfig(), ds, Encoding("one_hot"), OrdinalScale())

    def test_output_dim_must_match_encoding(self):
        x, labels = memorization_set()
        ds = Dataset(np.arange(8), x, labels, ("f",))
        with pytest.raises(ConfigError):
            train(MlpConfig(6, (4,), 3), TrainConfig(), ds, Encoding("one_hot"), OrdinalScale())

    def test_divergence_is_reported(self):
        x, labels = memorization_set()
        y = encode_labels(Encoding("one_hot"), OrdinalScale(), labels) * 1e300
        with pytest.raises(TrainingDivergedError):
            fit(MlpConfig(6, (4,), 5), TrainConfig(epochs=2), x, y)


class TestInitialization:
    def test_equal_d_identical(self):
        a = init_params(MlpConfig.for_encoding(10, (8, 8), Encoding("one_hot"), 5, 7, init_seed=2))
        b = init_params(MlpConfig.for_encoding(10, (8, 8), Encoding("soft_progress_bar"), 5, 7, init_seed=2))
        assert all(p.tobytes() == q.tobytes() for p, q in zip(a.arrays(), b.arrays()))

    def test_shared_shape_layers_identical(self):
        a = init_params(MlpConfig.for_encoding(10, (8, 8), Encoding("one_hot"), 5, 7, init_seed=2))
        b = init_params(MlpConfig.for_encoding(10, (8, 8), Encoding("binary_number"), 5, 7, init_seed=2))
        for layer in range(2):
            assert a.weights[layer].tobytes() == b.weights[layer].tobytes()
            assert a.biases[layer].tobytes() == b.biases[layer].tobytes()
        assert a.weights[2].shape != b.weights[2].shape

    def test_output_width(self):
        cfg = MlpConfig.for_encoding(10, (8,), Encoding(EncodingKind.PROGRESS_BAR), 5, 7)
        assert cfg.output_dim == 28


def test_checkpoint_roundtrip(tmp_path):
    cfg = MlpConfig(5, (7, 3), 4, init_seed=11)
    params = random_params(cfg.layer_dims, seed=12)
    params.weights[0][0, 0] = 0.1 + 0.2
    save_checkpoint(tmp_path / "m.json", params, cfg, extra={"encoding": "gaussian"})
    got, got_cfg, extra = load_checkpoint(tmp_path / "m.json")
    assert got_cfg == cfg and extra == {"encoding": "gaussian"}
    for a, b in zip(params.arrays(), got.arrays()):
        assert a.tobytes() == b.tobytes()


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "bad.json").write_text("{nope")
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "bad.json")
