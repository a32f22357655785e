import math

import numpy as np
import pytest

from strange_reservoir.learning.readout import (
    DESK_BATCH_SIZE,
    DESK_HIDDEN,
    PAPER_LEARNING_RATES,
    FeatureMap,
    MlpModel,
    RidgeModel,
    SingularSystemError,
    TrainConfig,
    TrainingDivergedError,
    add_noise,
    fit_mlp,
    fit_ridge,
    gradient_check,
    init_mlp,
    mlp_loss,
    mlp_template,
    mse,
    nrmse,
    predict,
    predict_batch,
    ridge_gradient,
)
from strange_reservoir.numerics.linalg import DimensionError


def noisy_plane(rng, count):
    x = rng.uniform(-1.0, 1.0, size=(count, 2))
    y = 0.5 * x[:, 0] - 0.3 * x[:, 1] + rng.normal(0.0, 0.3, size=count)
    return x, y


def test_feature_map_dimensions(rng):
    fm = FeatureMap.polynomial(3, 2)
    assert fm.output_dim == math.comb(5, 2) == 10
    phi = fm.transform(rng.standard_normal((4, 3)))
    assert phi.shape == (4, 10)
    assert np.array_equal(phi[:, 0], np.ones(4))
    assert FeatureMap.linear(7).output_dim == 8


def test_feature_map_validation():
    with pytest.raises(DimensionError):
        FeatureMap.linear(0)
    with pytest.raises(ValueError):
        FeatureMap("linear", 3, degree=2)
    with pytest.raises(DimensionError):
        FeatureMap.linear(3).transform(np.zeros((2, 4)))


def test_ridge_recovers_an_affine_map(rng):
    x = rng.standard_normal((200, 3))
    y = 1.0 + 2.0 * x[:, 0] - x[:, 1] + 0.5 * x[:, 2]
    model = fit_ridge(x, y, FeatureMap.linear(3), lam=0.0)
    assert np.allclose(model.weights, [1.0, 2.0, -1.0, 0.5], atol=1e-10)
    assert model.train_mse < 1e-20


def test_ridge_fits_a_constant_target(rng):
    x = rng.standard_normal((50, 2))
    model = fit_ridge(x, np.full(50, 3.0), FeatureMap.polynomial(2, 2), 0.0)
    assert np.allclose(predict_batch(model, x), 3.0, atol=1e-12)


def test_ridge_solves_the_normal_equations(rng):
    x = rng.standard_normal((200, 4))
    y = np.sin(x[:, 0]) + x[:, 1] * x[:, 2]
    model = fit_ridge(x, y, FeatureMap.polynomial(4, 2), lam=0.1)
    grad = ridge_gradient(model, x, y)
    assert np.linalg.norm(grad) < 1e-8 * (1.0 + np.linalg.norm(model.weights))


def test_ridge_shrinks_with_lambda(rng):
    x = rng.standard_normal((100, 3))
    y = x @ [1.0, -2.0, 0.5] + rng.normal(0.0, 0.1, size=100)
    fm = FeatureMap.linear(3)
    models = [fit_ridge(x, y, fm, lam) for lam in (0, 1e-3, 0.1, 10, 1e3)]
    for small, large in zip(models, models[1:]):
        assert large.train_mse >= small.train_mse - 1e-12
        norms = np.linalg.norm(large.weights), np.linalg.norm(small.weights)
        assert norms[0] <= norms[1] + 1e-12


def test_ridge_with_duplicated_columns_needs_regularization(rng):
    x = rng.standard_normal((30, 2))
    x[:, 1] = x[:, 0]
    y = rng.standard_normal(30)
    with pytest.raises(SingularSystemError):
        fit_ridge(x, y, FeatureMap.linear(2), lam=0.0)
    assert fit_ridge(x, y, FeatureMap.linear(2), lam=1e-3).train_mse >= 0


def test_ridge_rejects(rng):
    x = rng.standard_normal((3, 2))
    with pytest.raises(ValueError):
        fit_ridge(x, np.zeros(3), FeatureMap.linear(2), lam=-1.0)
    with pytest.raises(DimensionError):
        fit_ridge(x, np.zeros(4), FeatureMap.linear(2), lam=0.0)
    with pytest.raises(DimensionError):
        fit_ridge(x[:2], np.zeros(2), FeatureMap.polynomial(2, 2), lam=1.0)
    with pytest.raises(ValueError):
        fit_ridge(x, [0.0, np.nan, 1.0], FeatureMap.linear(2), lam=1.0)


def test_backprop_matches_finite_differences(rng):
    model = init_mlp(3, [5, 4], rng)
    x, y = rng.standard_normal((20, 3)), rng.standard_normal(20)
    errors = gradient_check(model, x, y)
    assert len(errors) == 3
    assert max(errors) < 1e-5


def test_backprop_on_the_desk_network(rng):
    model = init_mlp(20, DESK_HIDDEN, rng)
    x, y = rng.standard_normal((40, 20)), rng.standard_normal(40)
    errors = gradient_check(model, x, y)
    assert len(errors) == len(DESK_HIDDEN) + 1
    assert max(errors) < 1e-5


def test_backprop_after_training(rng):
    x, y = noisy_plane(rng, 60)
    cfg = TrainConfig(learning_rates=[1e-2], epochs=50, patience=50)
    model = fit_mlp(x, y, mlp_template(2, (6,)), cfg, rng)
    assert max(gradient_check(model, x, y)) < 1e-5


def test_mlp_fits_a_constant_target(rng):
    x = rng.standard_normal((100, 3))
    y = np.full(100, 2.5)
    cfg = TrainConfig(learning_rates=[1e-2, 1e-3], epochs=300, patience=7)
    model = fit_mlp(x, y, mlp_template(3, (8, 8)), cfg, rng)
    assert mlp_loss(model, x, y) < 1e-10
    assert predict(model, x[0]) == pytest.approx(2.5, abs=1e-10)
    # validation never improves on the exact fit
    assert len(model.history) == 2 * cfg.patience


def test_mlp_is_competitive_with_ridge_on_a_noisy_plane(rng):
    x, y = noisy_plane(rng, 2000)
    x_test, y_test = noisy_plane(rng, 1000)
    ridge = fit_ridge(x, y, FeatureMap.linear(2), lam=1e-6)
    cfg = TrainConfig(learning_rates=[1e-2, 3e-3], epochs=1500, patience=200)
    mlp = fit_mlp(x, y, mlp_template(2, (10,)), cfg, rng)
    ridge_error = mse(predict_batch(ridge, x_test), y_test)
    assert mse(predict_batch(mlp, x_test), y_test) < 1.5 * ridge_error


def test_mlp_returns_the_best_checkpoint(rng):
    x, y = noisy_plane(rng, 200)
    cfg = TrainConfig(learning_rates=[5e-3, 1e-3], epochs=200, patience=20)
    model = fit_mlp(x, y, mlp_template(2, (6,)), cfg, rng)
    history = model.history
    assert history is not None and len(history) >= 2
    assert set(history.stage) <= {0, 1}
    x_val, y_val = x[180:], y[180:]
    assert mlp_loss(model, x_val, y_val) <= min(history.val_mse) + 1e-15
    frame = history.to_frame()
    assert list(frame.columns) == ["epoch", "stage", "train_mse", "val_mse"]
    assert len(frame) == len(history)


def test_mlp_training_is_seeded(rng):
    x, y = noisy_plane(rng, 100)
    cfg = TrainConfig(learning_rates=[1e-2], epochs=30, patience=30, seed=4)
    first = fit_mlp(x, y, mlp_template(2, (5,)), cfg)
    second = fit_mlp(x, y, mlp_template(2, (5,)), cfg)
    for w1, w2 in zip(first.weights, second.weights):
        assert np.array_equal(w1, w2)


def test_mlp_divergence_is_reported(rng):
    x, y = noisy_plane(rng, 50)
    cfg = TrainConfig(learning_rates=[1e200], epochs=10, patience=10)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(TrainingDivergedError) as info:
            fit_mlp(x, y, mlp_template(2, (4,)), cfg, rng)
    assert info.value.stage == 0
    assert "lower the learning rate" in str(info.value)


def test_oversized_batches_train_as_one_batch(rng):
    x, y = noisy_plane(rng, 20)
    models = [
        fit_mlp(
            x,
            y,
            mlp_template(2, (3,)),
            TrainConfig(epochs=20, patience=20, batch_size=size, seed=2),
        )
        for size in (None, 19, DESK_BATCH_SIZE)
    ]
    for other in models[1:]:
        for w1, w2 in zip(models[0].weights, other.weights):
            assert np.array_equal(w1, w2)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"learning_rates": []},
        {"learning_rates": [1e-3, 1e-2]},
        {"learning_rates": [-1e-3]},
        {"epochs": 0},
        {"batch_size": 0},
        {"val_fraction": 1.0},
        {"beta1": 1.0},
    ],
)
def test_train_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_train_config_scales():
    desk, paper = TrainConfig.desk(seed=3), TrainConfig.paper()
    assert desk.seed == 3
    assert desk.epochs < paper.epochs == 7000
    assert paper.learning_rates == list(PAPER_LEARNING_RATES)


def test_mlp_model_validation(rng):
    model = init_mlp(2, [3], rng)
    with pytest.raises(DimensionError):
        MlpModel([2, 3, 2], model.weights, model.biases)
    with pytest.raises(DimensionError):
        MlpModel([2, 3, 1], model.weights[:1], model.biases[:1])
    with pytest.raises(ValueError):
        MlpModel([2, 3, 1], model.weights, model.biases, z_min=1.0, z_max=0)


def test_predict_with_zero_readouts(rng):
    ridge = RidgeModel(FeatureMap.linear(3), np.zeros(4))
    assert predict(ridge, np.ones(3)) == 0.0
    mlp = init_mlp(3, [4], rng)
    mlp.weights[-1][:] = 0.0
    mlp.biases[-1][:] = 0.7
    assert predict(mlp, rng.standard_normal(3)) == 0.7


def test_predict_is_pure(rng):
    model = init_mlp(3, [4, 4], rng)
    state = rng.standard_normal(3)
    saved = state.copy()
    assert predict(model, state) == predict(model, state)
    assert np.array_equal(state, saved)
    assert predict(model, state) == predict_batch(model, state[None, :])[0]


def test_predict_rejects_bad_states(rng):
    model = RidgeModel(FeatureMap.linear(3), np.zeros(4))
    with pytest.raises(DimensionError):
        predict(model, np.zeros((2, 3)))
    with pytest.raises(DimensionError):
        predict(model, np.zeros(4))


def test_add_noise_without_variance(rng):
    series = np.linspace(0.0, 1.0, 11)
    noisy = add_noise(series, 0.0, rng)
    assert np.array_equal(noisy, series)
    assert noisy is not series


def test_add_noise_moments(rng):
    draws = 10**6
    noise = add_noise(np.zeros(draws), 0.25, rng)
    assert noise.var() == pytest.approx(0.25, rel=0.01)
    assert abs(noise.mean()) < 3 * math.sqrt(0.25 / draws)
    with pytest.raises(ValueError):
        add_noise(np.zeros(3), -1.0, rng)


def test_error_measures():
    truth = np.array([1.0, 2.0, 3.0])
    assert mse(truth + 1.0, truth) == 1.0
    assert nrmse(truth, truth) == 0.0
    assert nrmse(truth + 1.0, truth) == pytest.approx(1.0 / np.std(truth))
    with pytest.raises(ValueError):
        nrmse(truth, np.ones(3))
