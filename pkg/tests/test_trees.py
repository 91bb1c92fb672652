import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from newsload.trees import ExtraTreesConfig, ExtraTreesModel, fit_extratrees


def friedman(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, 5))
    y = 10 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20 * (X[:, 2] - 0.5) ** 2 + 10 * X[:, 3] + 5 * X[:, 4]
    return X, y + rng.standard_normal(n)


def test_constant_target_predicted_exactly():
    X = np.random.default_rng(0).standard_normal((50, 3))
    model = fit_extratrees(X, np.full(50, 7.25), ExtraTreesConfig(n_trees=10))
    assert (model.predict(np.random.default_rng(1).standard_normal((20, 3))) == 7.25).all()


def test_step_function_fitted():
    x = np.random.default_rng(0).uniform(size=(200, 1))
    y = (x[:, 0] > 0.5).astype(float)
    model = fit_extratrees(x, y, ExtraTreesConfig(n_trees=100, min_samples_split=2))
    assert np.sqrt(np.mean((model.predict(x)[:, 0] - y) ** 2)) < 0.05


def test_same_seed_bit_identical_and_threads_irrelevant():
    X, y = friedman(300, 1)
    cfg = ExtraTreesConfig(n_trees=20, seed=4)
    Xt, _ = friedman(50, 2)
    a = fit_extratrees(X, y, cfg).predict(Xt)
    b = fit_extratrees(X, y, cfg).predict(Xt)
    c = fit_extratrees(X, y, cfg, n_jobs=4).predict(Xt)
    assert np.array_equal(a, b) and np.array_equal(a, c)
    assert not np.array_equal(a, fit_extratrees(X, y, ExtraTreesConfig(n_trees=20, seed=5)).predict(Xt))


def test_single_tree_returns_leaf_mean():
    X, y = friedman(100, 2)
    model = fit_extratrees(X, y, ExtraTreesConfig(n_trees=1, min_samples_split=10))
    leaves = model.apply(X)[0]
    for leaf in np.unique(leaves):
        assert model.value[leaf, 0] == pytest.approx(y[leaves == leaf].mean(), abs=1e-12)
    np.testing.assert_array_equal(model.predict(X)[:, 0], model.value[leaves, 0])


def test_two_tree_average():
    X, y = friedman(100, 3)
    model = fit_extratrees(X, y, ExtraTreesConfig(n_trees=2))
    np.testing.assert_allclose(model.predict(X), (model.predict_tree(0, X) + model.predict_tree(1, X)) / 2, rtol=0, atol=1e-12)


def test_predictions_within_target_range_multi_output():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((150, 4))
    Y = np.column_stack([X[:, 0] ** 2, -X[:, 1], np.sin(X[:, 2])])
    model = fit_extratrees(X, Y, ExtraTreesConfig(n_trees=15))
    P = model.predict(rng.standard_normal((200, 4)) * 3)
    assert P.shape == (200, 3)
    assert (P >= Y.min(axis=0) - 1e-12).all() and (P <= Y.max(axis=0) + 1e-12).all()


def test_every_training_row_reaches_one_leaf():
    X, y = friedman(120, 5)
    model = fit_extratrees(X, y, ExtraTreesConfig(n_trees=5))
    leaves = model.apply(X)
    assert leaves.shape == (5, 120)
    assert (model.left[leaves] == -1).all() and np.isfinite(model.value[leaves]).all()
    assert (model.count[leaves] >= 1).all()


@settings(max_examples=10, deadline=None)
@given(st.permutations(list(range(8))))
def test_tree_order_irrelevant(order):
    X, y = friedman(80, 6)
    model = fit_extratrees(X, y, ExtraTreesConfig(n_trees=8))
    roots = model.roots[list(order)]
    shuffled = ExtraTreesModel(
        model.config, model.feature_names, roots, model.feature, model.threshold, model.left, model.right, model.value, model.count
    )
    assert np.array_equal(shuffled.predict(X), model.predict(X))


def test_variance_over_seeds_falls_with_more_trees():
    X, y = friedman(300, 7)
    Xt, _ = friedman(100, 8)
    spread = {}
    for m in (10, 200):
        preds = np.stack([fit_extratrees(X, y, ExtraTreesConfig(n_trees=m, seed=s)).predict(Xt) for s in range(10)])
        spread[m] = preds.var(axis=0).mean()
    assert spread[200] < spread[10]


def test_accuracy_comparable_to_reference_implementation():
    sklearn = pytest.importorskip("sklearn.ensemble")
    X, y = friedman(600, 9)
    Xt, yt = friedman(400, 10)
    ours = [np.sqrt(np.mean((fit_extratrees(X, y, ExtraTreesConfig(100, "all", 2, s)).predict(Xt)[:, 0] - yt) ** 2)) for s in range(3)]
    ref = [
        np.sqrt(np.mean((sklearn.ExtraTreesRegressor(100, max_features=1.0, random_state=s).fit(X, y).predict(Xt) - yt) ** 2))
        for s in range(3)
    ]
    assert abs(np.mean(ours) - np.mean(ref)) / np.mean(ref) < 0.05


def test_save_load_and_named_input(tmp_path):
    import pandas as pd

    X, y = friedman(60, 11)
    frame = pd.DataFrame(X, columns=list("abcde"))
    model = fit_extratrees(frame, y, ExtraTreesConfig(n_trees=3))
    model.save(tmp_path / "m.npz")
    back = ExtraTreesModel.load(tmp_path / "m.npz")
    assert np.array_equal(back.predict(frame[list("edcba")]), model.predict(X))
    with pytest.raises(KeyError, match="'a'"):
        back.predict(frame.drop(columns="a"))


def test_config_validation():
    with pytest.raises(ValueError):
        ExtraTreesConfig(n_trees=0)
    with pytest.raises(ValueError):
        ExtraTreesConfig(min_samples_split=1)
    assert ExtraTreesConfig(max_features="sqrt").resolve_max_features(150) == 12
    assert ExtraTreesConfig(max_features="third").resolve_max_features(2) == 1
    with pytest.raises(ValueError, match="non-finite"):
        fit_extratrees(np.array([[np.nan], [1.0]]), [1.0, 2.0])
