"""LSTM cell equations, BiLSTM forward pass, BPTT gradients, training."""

import copy
import math

import numpy as np
import pytest

from icsoh.errors import DataError, NumericalError
from icsoh.network import (
    BiLstmNetwork,
    BiLstmRegressor,
    LstmParams,
    LstmState,
    TrainConfig,
    bilstm_forward,
    effective_learning_rate,
    gradient_check,
    initialize_network,
    load_network,
    lstm_step,
    save_network,
    train_bilstm,
)


def scalar_step_oracle(params, prev_h, prev_c, x):
    """Literal per-element gate equations with math.exp, no vectorization."""
    h = params.hidden_size
    z = list(prev_h) + list(x)

    def gate(w_rows, bias, squash):
        out = []
        for row, b in zip(w_rows, bias):
            acc = b
            for w_jk, z_k in zip(row, z):
                acc += w_jk * z_k
            out.append(squash(acc))
        return out

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    f = gate(params.w_f, params.b_f, sig)
    i = gate(params.w_i, params.b_i, sig)
    g = gate(params.w_c, params.b_c, math.tanh)
    o = gate(params.w_o, params.b_o, sig)
    c = [f[j] * prev_c[j] + i[j] * g[j] for j in range(h)]
    new_h = [o[j] * math.tanh(c[j]) for j in range(h)]
    return np.array(new_h), np.array(c)


class TestLstmStep:
    def test_zero_everything_is_fixed_point(self):
        params = LstmParams(weights=np.zeros((8, 5)), biases=np.zeros(8))
        state = lstm_step(params, LstmState.zeros(2), np.zeros(3))
        np.testing.assert_array_equal(state.c, 0.0)
        np.testing.assert_array_equal(state.h, 0.0)

    def test_unit_cell_hand_case(self):
        params = LstmParams(weights=np.zeros((8, 5)), biases=np.zeros(8))
        prev = LstmState(h=np.zeros(2), c=np.ones(2))
        state = lstm_step(params, prev, np.array([0.3, -0.2, 0.9]))
        np.testing.assert_allclose(state.c, 0.5, atol=1e-15)
        np.testing.assert_allclose(state.h, 0.5 * math.tanh(0.5), atol=1e-12)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            h, d = int(rng.integers(1, 6)), int(rng.integers(1, 5))
            params = LstmParams(
                weights=rng.normal(scale=0.4, size=(4 * h, h + d)),
                biases=rng.normal(scale=0.2, size=4 * h),
            )
            prev = LstmState(h=rng.normal(size=h) * 0.5, c=rng.normal(size=h))
            x = rng.normal(size=d)
            state = lstm_step(params, prev, x)
            oh, oc = scalar_step_oracle(params, prev.h, prev.c, x)
            np.testing.assert_allclose(state.h, oh, atol=1e-12)
            np.testing.assert_allclose(state.c, oc, atol=1e-12)

    def test_dimension_mismatch(self):
        params = LstmParams(weights=np.zeros((8, 5)), biases=np.zeros(8))
        with pytest.raises(DataError):
            lstm_step(params, LstmState.zeros(2), np.zeros(4))

    def test_gate_ranges(self):
        rng = np.random.default_rng(3)
        net = initialize_network(6, 4, 3)
        X = rng.normal(size=(1, 5, 4))
        _, (caches_fwd, caches_bwd, _, _) = bilstm_forward(net, X[0])
        for caches in (caches_fwd, caches_bwd):
            for _, f, i, g, o, _, _ in caches:
                for gate in (f, i, o):
                    assert np.all((gate > 0.0) & (gate < 1.0))
                assert np.all((g > -1.0) & (g < 1.0))


class TestBilstmForward:
    def test_concat_width(self):
        net = initialize_network(8, 3, 0)
        _, cache = bilstm_forward(net, np.zeros((4, 3)))
        assert cache[2].shape == (1, 16)

    def test_matches_stepwise_composition(self):
        rng = np.random.default_rng(5)
        net = initialize_network(5, 3, 9)
        seq = rng.normal(size=(6, 3))

        fwd = LstmState.zeros(5)
        for t in range(6):
            fwd = lstm_step(net.forward_params, fwd, seq[t])
        bwd = LstmState.zeros(5)
        for t in range(5, -1, -1):
            bwd = lstm_step(net.backward_params, bwd, seq[t])
        concat = np.concatenate([fwd.h, bwd.h])
        expected = max(float(concat @ net.head_weights + net.head_bias[0]), 0.0)

        pred, _ = bilstm_forward(net, seq)
        assert pred == pytest.approx(expected, abs=1e-12)

    def test_backward_direction_is_reversal(self):
        rng = np.random.default_rng(6)
        net = initialize_network(4, 2, 1)
        seq = rng.normal(size=(5, 2))
        bwd = LstmState.zeros(4)
        for t in range(4, -1, -1):
            bwd = lstm_step(net.backward_params, bwd, seq[t])
        fwd_on_reversed = LstmState.zeros(4)
        for x in seq[::-1]:
            fwd_on_reversed = lstm_step(net.backward_params, fwd_on_reversed, x)
        np.testing.assert_allclose(bwd.h, fwd_on_reversed.h, atol=1e-15)

    def test_rectifier_clips_negative_head(self):
        net = initialize_network(4, 2, 0)
        net.head_weights[:] = 0.0
        net.head_bias[0] = -1.0
        pred, _ = bilstm_forward(net, np.ones((3, 2)))
        assert pred == 0.0

    def test_predictions_nonnegative(self):
        rng = np.random.default_rng(7)
        for seed in range(5):
            net = initialize_network(6, 3, seed)
            X = rng.normal(size=(10, 4, 3))
            assert np.all(net.predict_many(X) >= 0.0)

    def test_bounded_hidden_state(self):
        rng = np.random.default_rng(8)
        net = initialize_network(6, 3, 2)
        _, cache = bilstm_forward(net, rng.normal(size=(6, 3)) * 5.0)
        assert np.all(np.abs(cache[2]) < 1.0)  # concat of tanh-bounded outputs


class TestGradientCheck:
    def test_seeded_nets_under_tolerance(self):
        rng = np.random.default_rng(100)
        worst = 0.0
        for seed in range(8):
            h = int(rng.integers(2, 9))
            d = int(rng.integers(1, 7))
            steps = int(rng.integers(1, 7))
            net = initialize_network(h, d, seed)
            seq = rng.normal(size=(steps, d))
            worst = max(worst, gradient_check(net, seq, target=0.9))
        assert worst < 1e-4

    def test_zero_lstm_weights_head_closed_form(self):
        net = initialize_network(3, 2, 0)
        for params in (net.forward_params, net.backward_params):
            params.weights[:] = 0.0
            params.biases[:] = 0.0
        net.head_weights[:] = 0.0
        net.head_bias[0] = 0.25
        seq = np.ones((4, 2))
        target = 0.75
        from icsoh.network import _batch_backward, _batch_forward

        pred, cache = _batch_forward(net, seq[None])
        grads = _batch_backward(net, cache, np.array([2.0 * (pred[0] - target)]))
        # all-zero gates keep h == 0, so concat == 0: only the bias learns
        assert pred[0] == pytest.approx(0.25)
        np.testing.assert_allclose(grads[4], 0.0, atol=1e-15)
        assert grads[5][0] == pytest.approx(2.0 * (0.25 - 0.75), abs=1e-12)

    def test_unreachable_parameters_have_zero_error(self):
        # zero head weights over the forward half: its LSTM cannot affect the
        # loss, so analytic and numeric gradients are both exactly zero there
        net = initialize_network(3, 2, 1)
        net.head_weights[:3] = 0.0
        from icsoh.network import _batch_backward, _batch_forward

        seq = np.ones((3, 2))
        pred, cache = _batch_forward(net, seq[None])
        grads = _batch_backward(net, cache, np.array([2.0 * (pred[0] - 0.5)]))
        np.testing.assert_array_equal(grads[0], 0.0)
        np.testing.assert_array_equal(grads[1], 0.0)
        assert gradient_check(net, seq, 0.5) < 1e-4


class TestTraining:
    def test_loss_decreases_on_single_pair(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(1, 4, 3))
        cfg = TrainConfig(max_epochs=20, batch_size=1, initial_lr=0.002, seed=4)
        _, history = train_bilstm(X, np.array([0.8]), 6, 0.002, cfg)
        assert len(history) == 20
        assert all(b < a for a, b in zip(history, history[1:]))

    def test_learning_rate_schedule(self):
        cfg = TrainConfig(lr_drop_period=350, lr_drop_factor=0.01)
        assert effective_learning_rate(0.01, 1, cfg) == pytest.approx(0.01)
        assert effective_learning_rate(0.01, 349, cfg) == pytest.approx(0.01)
        assert effective_learning_rate(0.01, 350, cfg) == pytest.approx(1e-4)
        assert effective_learning_rate(0.01, 700, cfg) == pytest.approx(1e-6)

    def test_zero_epochs_returns_initialization(self):
        rng = np.random.default_rng(1)
        init = initialize_network(4, 3, 9)
        X = rng.uniform(size=(5, 3, 3))
        y = rng.uniform(size=5)
        net, history = train_bilstm(
            X, y, 4, 0.01, TrainConfig(max_epochs=0, seed=0), init_net=init
        )
        assert history == []
        for a, b in zip(net.parameter_arrays(), init.parameter_arrays()):
            np.testing.assert_array_equal(a, b)

    def test_deterministic_history(self):
        rng = np.random.default_rng(2)
        X = rng.uniform(size=(30, 4, 3))
        y = rng.uniform(0.6, 1.0, size=30)
        cfg = TrainConfig(max_epochs=10, batch_size=8, seed=123)
        _, h1 = train_bilstm(X, y, 6, 0.01, cfg)
        _, h2 = train_bilstm(X, y, 6, 0.01, cfg)
        assert h1 == h2

    def test_divergence_raises_with_epoch(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(size=(20, 3, 2))
        y = rng.uniform(0.6, 1.0, size=20)
        with pytest.raises(NumericalError, match="epoch"):
            train_bilstm(X, y, 6, 1e3, TrainConfig(max_epochs=60, batch_size=5, seed=0))

    def test_init_net_not_mutated(self):
        rng = np.random.default_rng(4)
        init = initialize_network(4, 2, 5)
        frozen = copy.deepcopy(init)
        X = rng.uniform(size=(8, 3, 2))
        y = rng.uniform(0.5, 1.0, size=8)
        train_bilstm(X, y, 4, 0.01, TrainConfig(max_epochs=3, seed=1), init_net=init)
        for a, b in zip(init.parameter_arrays(), frozen.parameter_arrays()):
            np.testing.assert_array_equal(a, b)


class TestPersistence:
    def test_roundtrip_bit_exact(self, tmp_path):
        net = initialize_network(7, 4, 42)
        path = tmp_path / "net.json"
        save_network(net, path, normalization={"input_ranges": [(0.0, 1.0)] * 4})
        loaded, payload = load_network(path)
        for a, b in zip(net.parameter_arrays(), loaded.parameter_arrays()):
            np.testing.assert_array_equal(a, b)
        assert payload["normalization"]["input_ranges"] == [[0.0, 1.0]] * 4
        rng = np.random.default_rng(0)
        X = rng.normal(size=(5, 3, 4))
        np.testing.assert_array_equal(net.predict_many(X), loaded.predict_many(X))


class TestRegressor:
    def test_fit_predict_and_clone(self):
        from sklearn.base import clone

        rng = np.random.default_rng(11)
        X = rng.uniform(size=(40, 4, 3))
        y = 0.7 + 0.2 * X[:, -1, 0]
        est = BiLstmRegressor(
            hidden_size=8,
            learning_rate=0.01,
            train_config=TrainConfig(max_epochs=40, batch_size=8),
            random_state=3,
        )
        cloned = clone(est)
        assert cloned.get_params()["hidden_size"] == 8
        est.fit(X, y)
        preds = est.predict(X)
        assert preds.shape == (40,)
        assert float(np.mean((preds - y) ** 2)) < 0.01

    def test_unfitted_predict_raises(self):
        with pytest.raises(DataError, match="not fitted"):
            BiLstmRegressor().predict(np.zeros((1, 2, 3)))
