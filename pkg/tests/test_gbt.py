import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from residual_error.errors import DimensionError, ValidationError
from residual_error.gbt import (
    GbtParams,
    Leaf,
    Split,
    best_split,
    ensemble_from_dict,
    ensemble_to_dict,
    fit_gbt,
    fit_tree,
    gradients,
    leaf_score,
    predict_gbt,
    presort,
    split_gain,
    training_loss,
    tree_predict,
)

from gbt_oracle import brute_force_split


def _walk(node, rows, X):
    yield node, rows
    if isinstance(node, Split):
        left = [i for i in rows if X[i, node.feature] < node.threshold]
        right = [i for i in rows if not X[i, node.feature] < node.threshold]
        yield from _walk(node.left, left, X)
        yield from _walk(node.right, right, X)


def _random_problem(rng):
    n = int(rng.integers(2, 65))
    d = int(rng.integers(1, 5))
    # coarse grid values force duplicate feature values
    X = rng.integers(0, 8, (n, d)) / 4.0
    y = rng.integers(0, 2, n).astype(float)
    return X, y


@pytest.mark.parametrize("seed", range(10))
def test_first_tree_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    X, y = _random_problem(rng)
    params = GbtParams(num_trees=1, max_depth=3)
    g, h = gradients("logistic", y, np.zeros(len(y)))
    tree, _ = fit_tree(X, g, h, params)
    for node, rows in _walk(tree, list(range(len(y))), X):
        if isinstance(node, Split):
            gain, f, thr = brute_force_split(X, g, h, rows, 1.0, 0.0, 1.0)
            assert (node.feature, node.threshold) == (f, thr)
            assert node.gain == pytest.approx(float(gain), abs=1e-10)


def test_two_point_example():
    X = np.array([[0.0], [1.0]])
    g, h = np.array([-1.0, 1.0]), np.array([1.0, 1.0])
    params = GbtParams(num_trees=1, max_depth=1, learning_rate=1.0, reg_lambda=1.0, min_child_weight=0.0)
    tree, values = fit_tree(X, g, h, params)
    assert tree.feature == 0 and tree.threshold == 0.5
    # 0.5 * (1/2 + 1/2 - 0) = 0.5
    assert tree.gain == 0.5
    assert tree.left.score == 0.5 and tree.right.score == -0.5
    np.testing.assert_array_equal(values, [0.5, -0.5])


def test_leaf_formula():
    assert leaf_score(3.0, 2.0, GbtParams(learning_rate=0.5, reg_lambda=1.0)) == -0.5


def test_gain_formula():
    assert split_gain(-1.0, 1.0, 1.0, 1.0, 1.0, 0.25) == 0.25


def test_min_child_weight_blocks_split():
    X = np.array([[0.0], [1.0]])
    g, h = np.array([-1.0, 1.0]), np.array([1.0, 1.0])
    tree, _ = fit_tree(X, g, h, GbtParams(num_trees=1, min_child_weight=1.5))
    assert isinstance(tree, Leaf)


def test_gamma_prunes():
    X = np.array([[0.0], [1.0]])
    g, h = np.array([-1.0, 1.0]), np.array([1.0, 1.0])
    tree, _ = fit_tree(X, g, h, GbtParams(num_trees=1, gamma=0.5, min_child_weight=0.0))
    assert isinstance(tree, Leaf)


def test_constant_features_give_a_leaf():
    XT = np.ascontiguousarray(np.ones((2, 5)))
    order = presort(XT.T)
    assert best_split(XT, order, np.ones(5), np.ones(5), GbtParams()) is None


def test_tie_break_prefers_lowest_feature():
    X = np.array([[0.0, 0.0], [1.0, 1.0]])
    g, h = np.array([-1.0, 1.0]), np.ones(2)
    tree, _ = fit_tree(X, g, h, GbtParams(min_child_weight=0.0))
    assert tree.feature == 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_training_loss_is_monotone(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(40, 3))
    y = (X[:, 0] + 0.3 * rng.standard_normal(40) > 0.5).astype(float)
    losses = [training_loss(fit_gbt(X, y, GbtParams(num_trees=k, max_depth=2)), X, y) for k in range(6)]
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_zero_trees_predict_half():
    X = np.zeros((3, 2))
    ens = fit_gbt(X, np.array([0.0, 1.0, 1.0]), GbtParams(num_trees=0))
    np.testing.assert_array_equal(predict_gbt(ens, X), 0.5)


def test_squared_error_base_is_label_mean():
    ens = fit_gbt(np.zeros((4, 1)), np.array([1.0, 2.0, 3.0, 6.0]), GbtParams(num_trees=0), "squared_error")
    assert ens.base_score == 3.0


def test_balanced_xor_has_no_positive_first_split():
    # every axis split leaves G_L = G_R = 0, so greedy growth stops at the root
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]] * 10, dtype=float)
    y = np.array([0, 1, 1, 0] * 10, dtype=float)
    ens = fit_gbt(X, y, GbtParams(num_trees=5, max_depth=2, min_child_weight=0.0))
    assert all(isinstance(t, Leaf) for t in ens.trees)


def test_fits_unbalanced_xor():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]] * 10 + [[1, 1]] * 5, dtype=float)
    y = np.array([0, 1, 1, 0] * 10 + [0] * 5, dtype=float)
    ens = fit_gbt(X, y, GbtParams(num_trees=50, max_depth=2, learning_rate=0.3, min_child_weight=0.0))
    assert np.all((predict_gbt(ens, X) > 0.5) == (y == 1))


def test_training_outputs_match_tree_predict():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(50, 3))
    g, h = rng.normal(size=50), rng.uniform(0.1, 1, 50)
    tree, values = fit_tree(X, g, h, GbtParams(max_depth=3, min_child_weight=0.0))
    np.testing.assert_array_equal(tree_predict(tree, X), values)


def test_round_trip_is_exact():
    rng = np.random.default_rng(1)
    X = rng.uniform(size=(60, 4))
    y = (X.sum(axis=1) > 2).astype(float)
    ens = fit_gbt(X, y, GbtParams(num_trees=10))
    Z = rng.uniform(size=(100, 4))
    np.testing.assert_array_equal(predict_gbt(ensemble_from_dict(ensemble_to_dict(ens)), Z), predict_gbt(ens, Z))


def test_errors():
    with pytest.raises(ValidationError):
        fit_gbt(np.zeros((2, 1)), np.array([0.0, 2.0]))
    with pytest.raises(ValidationError):
        fit_gbt(np.zeros((0, 1)), np.zeros(0))
    with pytest.raises(DimensionError):
        fit_gbt(np.zeros((3, 1)), np.zeros(2))
    ens = fit_gbt(np.zeros((2, 2)), np.array([0.0, 1.0]), GbtParams(num_trees=1))
    with pytest.raises(DimensionError):
        predict_gbt(ens, np.zeros((1, 3)))
    with pytest.raises(ValidationError):
        GbtParams(max_depth=0)
