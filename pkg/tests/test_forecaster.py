import math

import numpy as np
import pytest

from gcause.forecaster import (
    ForecasterConfig,
    ForecasterError,
    TrainedForecaster,
    gradient_check,
    init_params,
    nll_loss,
    predict,
    train,
    window_loss,
    with_zeroed_inputs,
    zero_params,
)
from gcause.series import make_windows

GAUSS_ENTROPY = 0.5 * math.log(2 * math.pi * math.e)


@pytest.mark.parametrize("mu, sigma, z, expected", [
    (0.0, 1.0, 0.0, 0.9189385),
    (0.0, 1.0, 1.0, 1.4189385),
    (1.0, 0.5, 1.0, 0.2257913),
])
def test_nll_examples(mu, sigma, z, expected):
    assert nll_loss(mu, sigma, z) == pytest.approx(expected, abs=1e-6)


def test_nll_rejects_nonpositive_sigma():
    with pytest.raises(ForecasterError):
        nll_loss(0.0, 0.0, 1.0)


def test_config_validation():
    with pytest.raises(ForecasterError):
        ForecasterConfig(context=0)
    with pytest.raises(ForecasterError):
        ForecasterConfig(val_fraction=1.0)
    assert ForecasterConfig().hidden_for(4) == 32
    assert ForecasterConfig(hidden=5).hidden_for(4) == 5


TINY = ForecasterConfig(context=5, horizon=3, hidden=4, seed=0)


def _probe():
    return np.random.default_rng(1).normal(size=(8, 3))


def test_gradient_check_tiny_model():
    assert gradient_check(TINY, _probe()) < 1e-4


def test_gradient_check_zero_params():
    assert gradient_check(TINY, _probe(), params=zero_params(3, 4)) < 1e-4


def test_gradient_check_coarse_step_is_worse():
    # a huge finite-difference step must show truncation error; guards against a vacuous checker
    assert gradient_check(TINY, _probe(), step=1e-2) > 10 * gradient_check(TINY, _probe())


def test_gradient_check_rejects_bad_probe():
    with pytest.raises(ForecasterError):
        gradient_check(TINY, np.zeros((7, 3)))


def test_zero_weights_predict_output_bias():
    params = zero_params(2, 3)
    params["bo"] = np.array([0.3, -0.7, 0.0, 1.0])
    model = TrainedForecaster(params, ForecasterConfig(context=4, horizon=3, hidden=3))
    traj = predict(model, np.random.default_rng(0).normal(size=(4, 2)))
    np.testing.assert_allclose(traj.mu, np.tile([0.3, -0.7], (3, 1)))
    expected_sigma = np.log1p(np.exp([0.0, 1.0])) + 1e-3
    np.testing.assert_allclose(traj.sigma, np.tile(expected_sigma, (3, 1)))


def test_sigma_floor_and_shapes():
    cfg = ForecasterConfig(context=6, horizon=4, hidden=5, min_sigma=0.05)
    params = init_params(3, 5, np.random.default_rng(2))
    params["bo"][3:] = -50.0  # softplus ~ 0 so the floor is what remains
    model = TrainedForecaster(params, cfg)
    ctx = np.random.default_rng(3).normal(size=(7, 6, 3))
    traj = predict(model, ctx)
    assert traj.mu.shape == (7, 4, 3) and traj.horizon == 4
    assert np.all(traj.sigma >= 0.05)
    np.testing.assert_allclose(traj.sigma, 0.05, atol=1e-12)


def test_horizon_one_matches_teacher_forced_head():
    cfg = ForecasterConfig(context=5, horizon=1, hidden=4)
    params = init_params(3, 4, np.random.default_rng(4))
    model = TrainedForecaster(params, cfg)
    block = np.random.default_rng(5).normal(size=(6, 3))
    traj = predict(model, block[:5], horizon=1)
    loss, _ = window_loss(params, block, 5, cfg.min_sigma)
    assert float(nll_loss(traj.mu[0], traj.sigma[0], block[5]).mean()) == pytest.approx(loss, rel=1e-12)


def test_predict_batch_equals_single():
    model = TrainedForecaster(init_params(2, 4, np.random.default_rng(6)), ForecasterConfig(context=5, horizon=3, hidden=4))
    ctx = np.random.default_rng(7).normal(size=(3, 5, 2))
    batch = predict(model, ctx)
    for k in range(3):
        np.testing.assert_allclose(predict(model, ctx[k]).mu, batch.mu[k], atol=1e-14)


def test_predict_rejects_wrong_width():
    model = TrainedForecaster(zero_params(2, 3), ForecasterConfig(context=4, horizon=2, hidden=3))
    with pytest.raises(ForecasterError):
        predict(model, np.zeros((4, 3)))


def _ar_series(T=600, seed=0):
    rng = np.random.default_rng(seed)
    X = np.zeros((T, 2))
    eps = rng.normal(size=(T, 2))
    for t in range(1, T):
        X[t, 0] = 0.7 * X[t - 1, 0] + eps[t, 0]
        X[t, 1] = 0.6 * X[t - 1, 0] + 0.5 * eps[t, 1]
    return X / X.std(0)


def test_training_is_deterministic_and_makes_progress():
    X = _ar_series()
    cfg = ForecasterConfig(context=8, horizon=2, epochs=8, seed=3, val_fraction=0.0)
    w = make_windows(len(X), 8, 2, 1)
    a, b = train(X, w, cfg), train(X, w, cfg)
    for k in a.params:
        np.testing.assert_array_equal(a.params[k], b.params[k])
    assert a.loss_trace == b.loss_trace
    assert len(a.loss_trace) == 8
    assert a.loss_trace[-1] <= 0.8 * a.loss_trace[0]


def test_train_rejects_mismatched_windows():
    X = _ar_series(100)
    with pytest.raises(ForecasterError):
        train(X, make_windows(100, 6, 2, 1), ForecasterConfig(context=8, horizon=2))


def test_early_stopping_returns_best_epoch():
    X = _ar_series(400, seed=1)
    cfg = ForecasterConfig(context=8, horizon=2, epochs=30, patience=3, seed=1)
    model = train(X, make_windows(len(X), 8, 2, 1), cfg)
    assert 1 <= model.best_epoch <= len(model.val_trace)
    assert model.val_trace[model.best_epoch - 1] == min(model.val_trace)


def test_serialization_round_trip(tmp_path):
    X = _ar_series(200)
    cfg = ForecasterConfig(context=8, horizon=2, epochs=2)
    model = train(X, make_windows(len(X), 8, 2, 1), cfg)
    path = tmp_path / "model.json"
    model.save(path)
    back = TrainedForecaster.load(path)
    assert back.config == cfg and back.best_epoch == model.best_epoch
    ctx = X[:8]
    np.testing.assert_array_equal(predict(back, ctx).mu, predict(model, ctx).mu)
    model.write_loss_trace(tmp_path / "loss.csv")
    lines = (tmp_path / "loss.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss" and len(lines) == len(model.loss_trace) + 1


def test_load_rejects_unknown_format():
    with pytest.raises(ForecasterError):
        TrainedForecaster.from_json({"format": "other/9"})


def test_zeroed_inputs_ignore_columns():
    model = TrainedForecaster(init_params(3, 4, np.random.default_rng(8)), ForecasterConfig(context=5, horizon=2, hidden=4))
    blind = with_zeroed_inputs(model, [1])
    ctx = np.random.default_rng(9).normal(size=(5, 3))
    other = ctx.copy()
    other[:, 1] = 100.0
    np.testing.assert_array_equal(predict(blind, ctx).mu, predict(blind, other).mu)
    assert not np.array_equal(predict(model, ctx).mu, predict(model, other).mu)


def _white_noise_heldout_nll():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((4000, 2))
    cfg = ForecasterConfig()
    model = train(X[:2000], make_windows(2000, cfg.context, cfg.horizon, 1), cfg)
    hold = make_windows(4000, cfg.context, cfg.horizon, cfg.horizon, start=2000)
    traj = predict(model, hold.contexts(X))
    return float(nll_loss(traj.mu, traj.sigma, hold.targets(X)).mean())


@pytest.mark.slow
def test_white_noise_reaches_gaussian_entropy():
    # expected NLL of N(0,1) data under the true model is 0.5 * ln(2 pi e)
    assert abs(_white_noise_heldout_nll() - GAUSS_ENTROPY) <= 0.15


@pytest.mark.slow
def test_copy_task_sigma_collapses():
    rng = np.random.default_rng(1)
    z = rng.standard_normal(2001)
    X = np.column_stack([z[1:], z[:-1]])  # column 2 is column 1 one step late
    cfg = ForecasterConfig(epochs=150, patience=20)
    model = train(X, make_windows(2000, cfg.context, cfg.horizon, 1), cfg)
    traj = predict(model, make_windows(2000, cfg.context, cfg.horizon, cfg.horizon).contexts(X))
    assert traj.sigma[:, 0, 1].mean() <= 3 * cfg.min_sigma
    # the first column stays unpredictable
    assert traj.sigma[:, 0, 0].mean() > 0.5
