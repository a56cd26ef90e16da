import numpy as np
import pytest

from residual_error.attacks import AttackConfig
from residual_error.data import make_two_gaussians
from residual_error.errors import DimensionError, FrozenWeightsError, ValidationError
from residual_error.gbt import GbtParams, predict_gbt
from residual_error.hybrid import extract_features, predict_hybrid, train_hybrid
from residual_error.nn import TrainConfig, init_model, train
from residual_error.residual import build_residual_dataset


@pytest.fixture(scope="module")
def setup():
    ds = make_two_gaussians(120, 4.0, 3, seed=2)
    model, _ = train(init_model([3, 12, 6, 2], seed=1), ds, TrainConfig(0.1, 10, 16))
    s_res = build_residual_dataset(model, ds, AttackConfig(48))
    return model, ds, s_res


def test_features_are_post_relu_penultimate(setup):
    model, ds, _ = setup
    f = extract_features(model, ds.inputs)
    assert f.shape == (len(ds), 6) and f.min() >= 0
    h = np.maximum(ds.inputs @ model.weights[0] + model.biases[0], 0)
    h = np.maximum(h @ model.weights[1] + model.biases[1], 0)
    np.testing.assert_allclose(f, h, rtol=1e-15)


def test_composition_law(setup):
    model, ds, s_res = setup
    g = train_hybrid(model, s_res, GbtParams(num_trees=20))
    np.testing.assert_array_equal(predict_hybrid(g, ds.inputs), predict_gbt(g.head, extract_features(model, ds.inputs)))


def test_training_leaves_extractor_untouched(setup):
    model, ds, s_res = setup
    before = model.checksum()
    g = train_hybrid(model, s_res, GbtParams(num_trees=10))
    predict_hybrid(g, ds.inputs)
    assert model.checksum() == before == g.extractor_checksum


def test_mutated_extractor_detected(setup):
    model, ds, s_res = setup
    copy = model.copy()
    g = train_hybrid(copy, s_res, GbtParams(num_trees=5))
    copy.weights[0][0, 0] += 1e-12
    with pytest.raises(FrozenWeightsError):
        predict_hybrid(g, ds.inputs)


def test_wrong_width_rejected(setup):
    model, _, s_res = setup
    g = train_hybrid(model, s_res, GbtParams(num_trees=2))
    with pytest.raises(DimensionError):
        g.score(np.zeros((1, 4)))


def test_regression_residuals_rejected():
    from residual_error.data import LabeledDataset

    x = np.random.default_rng(0).uniform(size=(10, 2))
    model = init_model([2, 3, 1], seed=0, loss_kind="mse")
    s = build_residual_dataset(model, LabeledDataset(x, x[:, 0], "r", None))
    with pytest.raises(ValidationError):
        train_hybrid(model, s)
