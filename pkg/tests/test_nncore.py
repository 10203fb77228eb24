"""Sigmoid, dense forward/backward, the optimizer, the gradient checker,
and the training loop."""
import numpy as np
import pytest

from hemanet.nncore import (
    LayerParams,
    TrainConfig,
    TrainingDivergedError,
    backprop,
    batch_backprop,
    batch_forward,
    forward_dense,
    gradient_check,
    mse_grad,
    mse_loss,
    sgd_momentum_step,
    sigmoid,
    sigmoid_prime,
    train_loop,
)
from hemanet.models import build_ffnn


class TestSigmoid:
    def test_at_zero(self):
        assert sigmoid(0.0) == 0.5

    def test_symmetry(self):
        x = np.random.default_rng(0).uniform(-30, 30, size=500)
        np.testing.assert_allclose(sigmoid(x) + sigmoid(-x), 1.0, atol=1e-12)

    def test_prime_at_zero(self):
        assert sigmoid_prime(0.0) == 0.25

    def test_prime_matches_central_difference(self):
        x = np.linspace(-8, 8, 200)
        h = 1e-6
        numeric = (sigmoid(x + h) - sigmoid(x - h)) / (2 * h)
        np.testing.assert_allclose(sigmoid_prime(x), numeric, atol=1e-9)

    def test_stable_to_700(self):
        # No overflow anywhere in [-700, 700]; everything stays finite.
        with np.errstate(all="raise"):
            for x in (-700.0, 700.0, np.array([-700.0, -100.0, 100.0, 700.0])):
                s = sigmoid(x)
                assert np.all(np.isfinite(s))
                assert np.all((np.asarray(s) >= 0) & (np.asarray(s) <= 1))
                assert np.all(np.isfinite(sigmoid_prime(x)))

    def test_strictly_inside_unit_interval_where_representable(self):
        # float64 saturates to exactly 0.0/1.0 past |x| ~ 36; inside that
        # range the output is strictly between 0 and 1.
        x = np.linspace(-36, 36, 2001)
        s = sigmoid(x)
        assert np.all((s > 0) & (s < 1))

    def test_monotonic(self):
        x = np.linspace(-20, 20, 1000)
        assert np.all(np.diff(sigmoid(x)) > 0)


class TestForwardDense:
    def test_zero_params_give_half(self):
        layer = LayerParams(np.zeros((3, 4)), np.zeros(3))
        pre, act = forward_dense(layer, np.array([1.0, -2.0, 0.5, 3.0]))
        np.testing.assert_array_equal(pre, 0.0)
        np.testing.assert_array_equal(act, 0.5)

    def test_unit_1x1_layer(self):
        layer = LayerParams(np.array([[1.0]]), np.array([0.0]))
        pre, act = forward_dense(layer, np.array([0.0]))
        assert pre[0] == 0.0 and act[0] == 0.5

    def test_activation_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(1)
        layer = LayerParams(rng.normal(size=(5, 3)), rng.normal(size=5))
        for _ in range(20):
            _, act = forward_dense(layer, rng.uniform(-2, 2, size=3))
            assert np.all((act > 0) & (act < 1))

    def test_dimension_mismatch(self):
        layer = LayerParams(np.zeros((2, 3)), np.zeros(2))
        with pytest.raises(ValueError):
            forward_dense(layer, np.zeros(4))

    def test_layer_shape_validation(self):
        with pytest.raises(ValueError):
            LayerParams(np.zeros((2, 3)), np.zeros(3))
        with pytest.raises(ValueError):
            LayerParams(np.array([[np.nan, 0.0]]), np.zeros(1))


class TestMse:
    def test_zero_at_match(self):
        assert mse_loss([0.3, 0.7], [0.3, 0.7]) == 0.0

    def test_known_value(self):
        assert mse_loss([1.0, 0.0], [0.0, 0.0]) == 0.5

    def test_gradient_zero_at_match(self):
        np.testing.assert_array_equal(mse_grad([0.2, 0.9], [0.2, 0.9]), 0.0)

    def test_gradient_value(self):
        np.testing.assert_allclose(mse_grad([1.0, 0.0], [0.0, 0.0]), [1.0, 0.0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            mse_loss([1.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            mse_grad([1.0], [1.0, 2.0])


def _finite_difference_grads(layers, x, target, eps=1e-6):
    """Independent oracle: central differences on every parameter."""
    grads = []
    for layer in layers:
        for arr in (layer.weights, layer.biases):
            g = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                original = arr[idx]
                arr[idx] = original + eps
                _, acts_p = _forward_all(layers, x)
                arr[idx] = original - eps
                _, acts_m = _forward_all(layers, x)
                arr[idx] = original
                g[idx] = (mse_loss(acts_p, target) - mse_loss(acts_m, target)) / (2 * eps)
            grads.append(g)
    return grads


def _forward_all(layers, x):
    act = np.asarray(x, dtype=float)
    for layer in layers:
        _, act = forward_dense(layer, act)
    return None, act


class TestBackprop:
    def _random_net(self, seed, dims=(4, 6, 2)):
        rng = np.random.default_rng(seed)
        layers = []
        for i in range(len(dims) - 1):
            layers.append(LayerParams(rng.normal(scale=0.8, size=(dims[i + 1], dims[i])),
                                      rng.normal(scale=0.2, size=dims[i + 1])))
        return layers, rng

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_finite_differences(self, seed):
        layers, rng = self._random_net(seed)
        x = rng.uniform(-1, 1, size=4)
        target = rng.uniform(0.1, 0.9, size=2)
        _, analytic = backprop(layers, x, target)
        numeric = _finite_difference_grads(layers, x, target)
        for a, n in zip(analytic, numeric):
            err = np.abs(a - n) / np.maximum.reduce([np.abs(a), np.abs(n), np.full_like(a, 1e-8)])
            assert err.max() < 1e-4

    def test_three_layer_depth(self):
        layers, rng = self._random_net(11, dims=(3, 4, 4, 1))
        x = rng.uniform(-1, 1, size=3)
        target = rng.uniform(0.1, 0.9, size=1)
        _, analytic = backprop(layers, x, target)
        numeric = _finite_difference_grads(layers, x, target)
        for a, n in zip(analytic, numeric):
            np.testing.assert_allclose(a, n, atol=1e-8)

    def test_zero_gradients_at_zero_loss(self):
        layers, rng = self._random_net(3)
        x = rng.uniform(-1, 1, size=4)
        _, pred = _forward_all(layers, x)
        loss, grads = backprop(layers, x, pred)
        assert loss == 0.0
        for g in grads:
            np.testing.assert_array_equal(g, 0.0)

    def test_doubling_residual_doubles_every_gradient(self):
        # Backprop is linear in the output residual: moving the target to
        # 2t - y doubles (y - t) and therefore every gradient.
        layers, rng = self._random_net(7)
        x = rng.uniform(-1, 1, size=4)
        target = rng.uniform(0.1, 0.9, size=2)
        _, pred = _forward_all(layers, x)
        _, grads = backprop(layers, x, target)
        _, doubled = backprop(layers, x, 2 * target - pred)
        for g, d in zip(grads, doubled):
            np.testing.assert_allclose(d, 2 * g, rtol=1e-12, atol=1e-15)

    def test_batch_matches_mean_of_per_sample(self):
        layers, rng = self._random_net(9)
        X = rng.uniform(-1, 1, size=(8, 4))
        T = rng.uniform(0.1, 0.9, size=(8, 2))
        batch_loss, batch_grads = batch_backprop(layers, X, T)
        per = [backprop(layers, x, t) for x, t in zip(X, T)]
        np.testing.assert_allclose(batch_loss, np.mean([p[0] for p in per]), rtol=1e-12)
        for i, bg in enumerate(batch_grads):
            mean_g = np.mean([p[1][i] for p in per], axis=0)
            np.testing.assert_allclose(bg, mean_g, rtol=1e-9, atol=1e-14)

    def test_batch_forward_matches_per_sample(self):
        layers, rng = self._random_net(13)
        X = rng.uniform(-1, 1, size=(6, 4))
        stacked = np.array([_forward_all(layers, x)[1] for x in X])
        np.testing.assert_allclose(batch_forward(layers, X), stacked, rtol=1e-12)


class TestSgdMomentum:
    def test_zero_momentum_is_plain_gradient_descent(self):
        params, vel = [np.array([1.0])], [np.array([0.0])]
        new_params, new_vel = sgd_momentum_step(params, [np.array([0.5])], vel, 0.1, 0.0)
        assert new_params[0][0] == pytest.approx(0.95)

    def test_zero_gradient_zero_velocity_is_identity(self):
        params = [np.array([1.0, -2.0])]
        new_params, new_vel = sgd_momentum_step(
            params, [np.zeros(2)], [np.zeros(2)], 0.1, 0.9
        )
        np.testing.assert_array_equal(new_params[0], params[0])
        np.testing.assert_array_equal(new_vel[0], 0.0)

    def test_two_step_velocity_recurrence(self):
        # mu=0.9, eta=0.1, g=1: v1 = -0.1, v2 = 0.9*(-0.1) - 0.1 = -0.19
        params, vel = [np.array([0.0])], [np.array([0.0])]
        g = [np.array([1.0])]
        params, vel = sgd_momentum_step(params, g, vel, 0.1, 0.9)
        assert vel[0][0] == pytest.approx(-0.1)
        params, vel = sgd_momentum_step(params, g, vel, 0.1, 0.9)
        assert vel[0][0] == pytest.approx(-0.19)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            sgd_momentum_step([np.zeros(2)], [np.zeros(3)], [np.zeros(2)], 0.1, 0.9)


class _OneLayerModel:
    """Single sigmoid layer with hand-derived closed-form gradients."""

    def __init__(self, w, b):
        self.w = np.array(w, dtype=float)
        self.b = np.array(b, dtype=float)

    def param_arrays(self):
        return [self.w, self.b]

    def _forward(self, x):
        return sigmoid(self.w @ x + self.b)

    def loss(self, x, target):
        return mse_loss(self._forward(x), target)

    def loss_and_grads(self, x, target):
        y = self._forward(x)
        delta = mse_grad(y, target) * y * (1 - y)
        return mse_loss(y, target), [np.outer(delta, x), delta]


class _CorruptedModel(_OneLayerModel):
    def loss_and_grads(self, x, target):
        loss, (gw, gb) = super().loss_and_grads(x, target)
        gw = gw.copy()
        gw[0, 0] *= 2.0  # deliberately wrong
        return loss, [gw, gb]


class TestGradientCheck:
    def test_closed_form_single_layer(self):
        rng = np.random.default_rng(5)
        model = _OneLayerModel(rng.normal(size=(3, 4)), rng.normal(size=3))
        x = rng.uniform(0.2, 1.0, size=4)
        target = rng.uniform(0.1, 0.9, size=3)
        assert gradient_check(model, x, target) < 1e-6

    def test_full_network(self):
        net = build_ffnn(5, 7, 2, seed=3)
        rng = np.random.default_rng(4)
        x = rng.uniform(-1, 1, size=5)
        target = rng.uniform(0.1, 0.9, size=2)
        assert gradient_check(net, x, target) < 1e-4

    def test_detects_corrupted_gradient(self):
        rng = np.random.default_rng(6)
        model = _CorruptedModel(rng.normal(size=(3, 4)), rng.normal(size=3))
        x = rng.uniform(0.2, 1.0, size=4)
        target = rng.uniform(0.1, 0.9, size=3)
        assert gradient_check(model, x, target) > 0.3

    def test_epsilon_bounds(self):
        model = _OneLayerModel(np.zeros((1, 1)), np.zeros(1))
        with pytest.raises(ValueError):
            gradient_check(model, np.array([1.0]), np.array([0.5]), epsilon=1e-8)
        with pytest.raises(ValueError):
            gradient_check(model, np.array([1.0]), np.array([0.5]), epsilon=1e-2)


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.learning_rate, cfg.momentum, cfg.epochs) == (0.05, 0.9, 1000)
        assert cfg.hidden_size == 50 and cfg.update_mode == "full-batch"

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"epochs": 0},
            {"learning_rate": 0.0},
            {"momentum": 1.0},
            {"momentum": -0.1},
            {"hidden_size": 0},
            {"update_mode": "minibatch"},
            {"patience": 0},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


def _toy_problem(seed=0, n=40):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 3))
    T = (X.sum(axis=1, keepdims=True) > 0).astype(float)
    return X, T


class TestTrainLoop:
    def test_loss_decreases(self):
        X, T = _toy_problem()
        net = build_ffnn(3, 8, 1, seed=1)
        _, curve = train_loop(net, (X, T), config=TrainConfig(epochs=300, hidden_size=8, seed=1))
        assert curve.train[-1] < curve.train[0]
        assert len(curve) == 300

    def test_bitwise_deterministic(self):
        X, T = _toy_problem()
        curves = []
        for _ in range(2):
            net = build_ffnn(3, 6, 1, seed=2)
            _, curve = train_loop(
                net, (X, T),
                config=TrainConfig(epochs=50, update_mode="per-sample", seed=7),
            )
            curves.append(curve)
        assert curves[0].train == curves[1].train

    def test_trained_params_deterministic(self):
        X, T = _toy_problem()
        nets = []
        for _ in range(2):
            net = build_ffnn(3, 6, 1, seed=2)
            train_loop(net, (X, T), config=TrainConfig(epochs=30, seed=7))
            nets.append(net)
        for a, b in zip(nets[0].param_arrays(), nets[1].param_arrays()):
            np.testing.assert_array_equal(a, b)

    def test_zero_momentum_identical_to_hand_rolled_gd(self):
        X, T = _toy_problem()
        net = build_ffnn(3, 5, 1, seed=3)
        train_loop(net, (X, T), config=TrainConfig(epochs=25, momentum=0.0, seed=0))

        reference = build_ffnn(3, 5, 1, seed=3)
        lr = TrainConfig().learning_rate
        for _ in range(25):
            _, grads = reference.batch_loss_and_grads(X, T)
            reference.set_param_arrays(
                [p - lr * g for p, g in zip(reference.param_arrays(), grads)]
            )
        for a, b in zip(net.param_arrays(), reference.param_arrays()):
            np.testing.assert_array_equal(a, b)

    def test_validation_curve_and_patience(self):
        X, T = _toy_problem(1, n=60)
        net = build_ffnn(3, 6, 1, seed=4)
        _, curve = train_loop(
            net, (X[:40], T[:40]), validation=(X[40:], T[40:]),
            config=TrainConfig(epochs=500, patience=5, seed=1),
        )
        assert curve.validation is not None
        assert len(curve.validation) == len(curve.train)

    def test_patience_stops_early_when_validation_worsens(self):
        # Validation targets are the training targets inverted, so the
        # validation loss rises as training fits; patience must kick in.
        X, T = _toy_problem(2, n=40)
        net = build_ffnn(3, 6, 1, seed=4)
        _, curve = train_loop(
            net, (X, T), validation=(X, 1.0 - T),
            config=TrainConfig(epochs=400, patience=3, seed=1),
        )
        assert len(curve) < 400

    def test_saturated_layers_stay_finite(self):
        # Pre-activations pinned at +/-700: forward and backward both finite.
        layers = [
            LayerParams(np.array([[700.0], [-700.0]]), np.zeros(2)),
            LayerParams(np.array([[700.0, -700.0]]), np.zeros(1)),
        ]
        with np.errstate(all="raise"):
            _, act = forward_dense(layers[0], np.array([1.0]))
            assert np.all(np.isfinite(act))
            loss, grads = backprop(layers, np.array([1.0]), np.array([0.5]))
            assert np.isfinite(loss)
            assert all(np.isfinite(g).all() for g in grads)

    def test_empty_training_data(self):
        net = build_ffnn(3, 4, 1, seed=0)
        with pytest.raises(ValueError):
            train_loop(net, (np.zeros((0, 3)), np.zeros((0, 1))))

    def test_non_finite_loss_aborts_with_epoch(self):
        X, T = _toy_problem()
        net = build_ffnn(3, 4, 1, seed=5)
        net.param_arrays()[0][0, 0] = np.nan  # live view into the weights
        with pytest.raises(TrainingDivergedError) as exc:
            train_loop(net, (X, T), config=TrainConfig(epochs=10))
        assert exc.value.epoch == 1
        assert "epoch 1" in str(exc.value)

    def test_curve_csv_format(self):
        X, T = _toy_problem()
        net = build_ffnn(3, 4, 1, seed=6)
        _, curve = train_loop(net, (X, T), validation=(X, T), config=TrainConfig(epochs=3))
        lines = curve.to_csv().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss"
        assert len(lines) == 4
        assert lines[1].startswith("1,")
