import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedrul.features import SequenceBatch
from fedrul.nn import (
    Adam,
    LSTMLayerParams,
    LSTMState,
    ModelConfig,
    NumericAbort,
    TrainConfig,
    init_model,
    lstm_cell_forward,
    model_forward,
    predict,
    rmse_loss,
    train_epochs,
)
from fedrul.nn.layers import (
    GATES,
    dense_backward,
    dense_forward,
    dropout_mask,
    lstm_backward,
    lstm_forward,
    sigmoid,
)
from fedrul.nn.model import params_equal, trainable_names

from oracles import GRADCHECK_CONFIGS, model_gradient_errors

SMALL = ModelConfig(units=6, lstm_layers=2, dense_layers=2)


def layer(in_size, units, fill=None, seed=0):
    rng = np.random.default_rng(seed)
    make = (lambda s: np.full(s, fill, float)) if fill is not None else (lambda s: rng.normal(0, 0.5, s))
    return LSTMLayerParams(
        W={g: make((in_size, units)) for g in GATES},
        U={g: make((units, units)) for g in GATES},
        b={g: make((units,)) for g in GATES},
    )


# ---------------------------------------------------------------- cell


def test_zero_parameter_cell():
    p = layer(3, 2, fill=0.0)
    prev = LSTMState(np.array([[0.3, -1.0]]), np.array([[2.0, -0.4]]))
    out, st_ = lstm_cell_forward(np.array([[1.0, -2.0, 5.0]]), prev, p)
    np.testing.assert_allclose(st_.cell, 0.5 * prev.cell, atol=1e-15)
    np.testing.assert_allclose(out, 0.5 * np.tanh(0.5 * prev.cell), atol=1e-15)
    out0, _ = lstm_cell_forward(np.array([[1.0, -2.0, 5.0]]), LSTMState.zeros(1, 2), p)
    assert np.all(out0 == 0.0)


def test_scalar_cell_oracle():
    p = layer(1, 1, fill=0.0)
    for g in GATES:
        p.W[g][:] = 1.0
    out, st_ = lstm_cell_forward(np.array([[1.0]]), LSTMState.zeros(1, 1), p)
    s1 = 1 / (1 + math.exp(-1))
    cell = s1 * math.tanh(1.0)
    assert st_.cell[0, 0] == pytest.approx(0.5568, abs=1e-4)
    # frozen from a 30-digit evaluation: S = 0.369606...
    assert out[0, 0] == pytest.approx(0.369606, abs=1e-4)
    assert st_.cell[0, 0] == pytest.approx(cell, abs=1e-15)
    assert out[0, 0] == pytest.approx(s1 * math.tanh(cell), abs=1e-15)


def test_cell_batch_independence_and_shape_errors():
    p = layer(3, 4)
    x = np.tile(np.array([[0.2, -0.1, 0.7]]), (2, 1))
    out, _ = lstm_cell_forward(x, LSTMState.zeros(2, 4), p)
    np.testing.assert_array_equal(out[0], out[1])
    with pytest.raises(ValueError):
        lstm_cell_forward(np.zeros((2, 5)), LSTMState.zeros(2, 4), p)
    with pytest.raises(ValueError):
        lstm_cell_forward(x, LSTMState.zeros(3, 4), p)


def test_sequence_forward_matches_cell_loop():
    p = layer(3, 4, seed=2)
    X = np.random.default_rng(3).normal(size=(2, 5, 3))
    H, _ = lstm_forward(X, *p.stacked())
    state = LSTMState.zeros(2, 4)
    for t in range(5):
        out, state = lstm_cell_forward(X[:, t], state, p)
        np.testing.assert_allclose(H[:, t], out, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 6), st.integers(1, 5), st.integers(1, 5), st.integers(0, 999))
def test_zero_parameter_lstm_outputs_zero(batch, time, in_size, units, seed):
    p = layer(in_size, units, fill=0.0)
    X = np.random.default_rng(seed).normal(size=(batch, time, in_size)) * 10
    H, _ = lstm_forward(X, *p.stacked())
    assert np.all(H == 0.0)


def test_sigmoid_is_stable():
    z = np.array([-1000.0, -5.0, 0.0, 5.0, 1000.0])
    s = sigmoid(z)
    assert np.all(np.isfinite(s))
    np.testing.assert_allclose(s, 1 / (1 + np.exp(-np.clip(z, -700, 700))), rtol=1e-15, atol=1e-300)


# ---------------------------------------------------------------- gradients


def _fd_layer_check(forward, backward, args, seed=0, step=1e-5):
    rng = np.random.default_rng(seed)
    out, cache = forward(*args)
    R = rng.normal(size=out.shape)
    grads = backward(R, cache)
    for a, g in zip(args, grads):
        num = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            orig = a[idx]
            a[idx] = orig + step
            up = float((forward(*args)[0] * R).sum())
            a[idx] = orig - step
            down = float((forward(*args)[0] * R).sum())
            a[idx] = orig
            num[idx] = (up - down) / (2 * step)
        assert np.linalg.norm(g - num) / max(np.linalg.norm(g) + np.linalg.norm(num), 1e-12) < 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_lstm_layer_gradients(seed):
    rng = np.random.default_rng(seed)
    B, T, n, u = 2, 4, 3, 5
    X = rng.normal(size=(B, T, n))
    W, U, b = layer(n, u, seed=seed).stacked()
    mask = dropout_mask(rng, (B, u), 0.3)
    _fd_layer_check(
        lambda X, W, U, b: lstm_forward(X, W, U, b, mask),
        lambda dH, cache: lstm_backward(dH, cache),
        [X, W, U, b],
        seed,
    )


def test_dense_layer_gradients():
    rng = np.random.default_rng(4)
    x, W, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 5)), rng.normal(size=5)
    for relu in (True, False):
        _fd_layer_check(lambda x, W, b: dense_forward(x, W, b, relu), dense_backward, [x, W, b])


@pytest.mark.parametrize("cfg", GRADCHECK_CONFIGS, ids=lambda c: f"seed{c['seed']}")
def test_model_gradients(cfg):
    errors = model_gradient_errors(cfg)
    assert max(errors.values()) < 1e-4, errors


def test_model_gradients_with_fixed_masks():
    cfg = dict(GRADCHECK_CONFIGS[1], noise=0.05, dropout=0.3, recurrent=0.2)
    errors = model_gradient_errors(cfg)
    assert max(errors.values()) < 1e-4, errors


# ---------------------------------------------------------------- loss


def test_rmse_loss_examples():
    assert rmse_loss(np.array([2.0, 3.0]), np.array([2.0, 3.0])) == (0.0, pytest.approx([0.0, 0.0]))
    loss, _ = rmse_loss(np.array([1.0, -1.0]), np.zeros(2))
    assert loss == 1.0
    with pytest.raises(ValueError):
        rmse_loss(np.zeros(0), np.zeros(0))
    with pytest.raises(ValueError):
        rmse_loss(np.zeros(2), np.zeros(3))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(0, 10_000))
def test_rmse_gradient_finite_differences(n, seed):
    rng = np.random.default_rng(seed)
    pred, target = rng.normal(size=n) * 5, rng.normal(size=n) * 5
    _, grad = rmse_loss(pred, target)
    h = 1e-6
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        num = (rmse_loss(pred + e, target)[0] - rmse_loss(pred - e, target)[0]) / (2 * h)
        assert num == pytest.approx(grad[i], rel=1e-6, abs=1e-9)


# ---------------------------------------------------------------- model


def test_init_conventions():
    p = init_model(24, 0)
    assert p["lstm0.W_f"].shape == (24, 64)
    assert p["lstm3.U_g"].shape == (64, 64)
    assert np.all(p["lstm2.b_f"] == 1.0) and np.all(p["lstm2.b_i"] == 0.0)
    limit = math.sqrt(6 / (24 + 64))
    assert np.abs(p["lstm0.W_o"]).max() <= limit
    assert p["dense3.W"].shape == (64, 64) and p["out.W"].shape == (64, 1)
    assert p["noise.sigma"][0] == 0.01 and p["dropout.rate"][0] == 0.1
    assert p["lstm1.recurrent_dropout"][0] == 0.2
    assert list(init_model(24, 7)) == list(p)
    assert "noise.sigma" not in trainable_names(p)


def test_forward_shape_and_eval_determinism():
    p = init_model(24, 1)
    x = np.random.default_rng(0).normal(size=(2, 8, 24))
    a = model_forward(x, p, "eval")
    assert a.shape == (2,)
    np.testing.assert_array_equal(a, model_forward(x, p, "eval"))
    with pytest.raises(ValueError):
        model_forward(np.zeros((2, 8, 23)), p)
    with pytest.raises(ValueError):
        model_forward(x, p, "train")


def test_train_mode_without_regularizers_equals_eval():
    p = init_model(5, 2, SMALL, noise_sigma=0.0, dropout=0.0, recurrent_dropout=0.0)
    x = np.random.default_rng(1).normal(size=(3, 4, 5))
    np.testing.assert_array_equal(
        model_forward(x, p, "train", np.random.default_rng(9)), model_forward(x, p, "eval")
    )


def test_train_mode_is_stochastic_but_seeded():
    p = init_model(5, 2, SMALL)
    x = np.random.default_rng(1).normal(size=(3, 4, 5))
    a = model_forward(x, p, "train", np.random.default_rng(9))
    b = model_forward(x, p, "train", np.random.default_rng(9))
    c = model_forward(x, p, "train", np.random.default_rng(10))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_batch_composition_invariance():
    p = init_model(4, 3, SMALL)
    x = np.random.default_rng(2).normal(size=(7, 5, 4))
    batched = model_forward(x, p)
    single = np.array([model_forward(x[i : i + 1], p)[0] for i in range(7)])
    np.testing.assert_allclose(single, batched, rtol=0, atol=1e-12)
    np.testing.assert_allclose(predict(p, x, batch_size=3), batched, rtol=0, atol=1e-12)


def test_inverted_dropout_preserves_expectation():
    rng = np.random.default_rng(0)
    x = np.linspace(0.5, 2.0, 16)
    total = np.zeros_like(x)
    for _ in range(10_000):
        total += x * dropout_mask(rng, x.shape, 0.3)
    np.testing.assert_allclose(total / 10_000, x, rtol=0.02)


# ---------------------------------------------------------------- optimizer and training


def test_adam_first_step_is_lr_times_sign():
    p = {"w": np.array([1.0, -2.0, 0.5])}
    Adam(0.01).step(p, {"w": np.array([3.0, -0.2, 1e-3])})
    np.testing.assert_allclose(p["w"], [0.99, -1.99, 0.49], atol=1e-7)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(dropout=1.0)


def linear_task(n=200, L=3, F=4, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, L, F))
    y = X[:, -1] @ np.array([1.0, -0.5, 0.25, 2.0])
    return SequenceBatch(X, y, [("FD001", 1, i) for i in range(n)])


def test_zero_epochs_is_identity():
    p = init_model(4, 0, SMALL)
    out, hist = train_epochs(linear_task(), p, TrainConfig(epochs=0))
    assert params_equal(out, p) and hist == []


def test_training_is_deterministic():
    p = init_model(4, 0, SMALL)
    cfg = TrainConfig(epochs=2, seed=5)
    a, ha = train_epochs(linear_task(), p, cfg)
    b, hb = train_epochs(linear_task(), p, cfg)
    assert params_equal(a, b) and ha == hb
    assert not params_equal(a, p)


def test_linear_task_is_learned():
    data = linear_task()
    p = init_model(4, 0, ModelConfig(units=16, lstm_layers=1, dense_layers=1), 0.0, 0.0, 0.0)
    cfg = TrainConfig(learning_rate=0.01, epochs=50, seed=1, gaussian_noise_sigma=0.0, dropout=0.0, recurrent_dropout=0.0)
    out, hist = train_epochs(data, p, cfg)
    assert all(b < a for a, b in zip(hist[:5], hist[1:5]))
    final = math.sqrt(np.mean((predict(out, data.inputs) - data.targets) ** 2))
    assert final < 0.2 * data.targets.std()


def test_max_steps_zero_leaves_params():
    p = init_model(4, 0, SMALL)
    out, hist = train_epochs(linear_task(), p, TrainConfig(epochs=3), max_steps=0)
    assert params_equal(out, p) and hist == []


def test_non_finite_loss_aborts():
    data = linear_task(n=40)
    data.inputs[37] = np.nan
    with pytest.raises(NumericAbort) as exc:
        train_epochs(data, init_model(4, 0, SMALL), TrainConfig(epochs=1, batch_size=8, seed=0))
    assert exc.value.epoch == 0 and exc.value.batch >= 0
    assert "batch" in str(exc.value)
