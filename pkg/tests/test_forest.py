import json

import numpy as np
import pytest

from paramspmm.errors import FormatError, ParameterError
from paramspmm.forest import DecisionTree, RandomForest, gini


def test_gini():
    assert gini(np.array([4, 0])) == 0.0
    assert gini(np.array([2, 2])) == 0.5
    assert gini(np.array([0, 0])) == 0.0


def test_unbounded_tree_memorises():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(150, 5))
    y = rng.integers(0, 7, 150)
    tree = DecisionTree(max_depth=None, min_leaf=1, max_features=None).fit(X, y)
    assert np.array_equal(tree.predict(X), y)


def test_duplicate_rows_take_majority():
    X = np.array([[0.0], [0.0], [0.0], [1.0]])
    y = np.array([2, 1, 2, 0])
    tree = DecisionTree(max_depth=None, min_leaf=1).fit(X, y)
    assert tree.predict([[0.0], [1.0]]).tolist() == [2, 0]


def test_leaf_tie_goes_to_lowest_label():
    tree = DecisionTree(max_depth=0).fit(np.zeros((4, 1)), np.array([3, 1, 3, 1]))
    assert tree.predict([[5.0]]).tolist() == [1]


def test_depth_limit():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(200, 3))
    y = rng.integers(0, 4, 200)
    assert DecisionTree(max_depth=3, min_leaf=1).fit(X, y).depth <= 3


def test_single_split_routes_on_threshold():
    X = np.array([[0.1], [0.2], [0.9], [1.5]])
    y = np.array([0, 0, 1, 1])
    tree = DecisionTree(max_depth=1, min_leaf=1).fit(X, y)
    assert tree.feature[0] == 0
    assert tree.threshold[0] == pytest.approx(0.55)
    assert tree.predict([[0.5], [0.6]]).tolist() == [0, 1]


def test_forest_deterministic_and_worker_independent():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(120, 6))
    y = (X[:, 0] > 0).astype(int) + (X[:, 3] > 0.5).astype(int)
    a = RandomForest(n_trees=15, seed=4).fit(X, y)
    b = RandomForest(n_trees=15, seed=4, workers=3).fit(X, y)
    assert [t.to_dict() for t in a.trees] == [t.to_dict() for t in b.trees]
    c = RandomForest(n_trees=15, seed=5).fit(X, y)
    assert [t.to_dict() for t in a.trees] != [t.to_dict() for t in c.trees]
    assert (a.predict(X) == y).mean() > 0.9


def test_vote_ties_lowest():
    f = RandomForest(n_trees=2)
    f.n_classes = 3
    f.trees = [DecisionTree.from_dict({"feature": [-1], "threshold": [0], "left": [-1], "right": [-1],
                                       "value": [v]}) for v in (2, 1)]
    assert f.predict([[0.0]]).tolist() == [1]


def test_tree_serialisation():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(50, 4))
    y = rng.integers(0, 3, 50)
    t = DecisionTree(max_depth=5, min_leaf=1).fit(X, y)
    d = json.loads(json.dumps(t.to_dict()))
    assert np.array_equal(DecisionTree.from_dict(d).predict(X), t.predict(X))
    with pytest.raises(FormatError):
        DecisionTree.from_dict({"feature": [0]})


def test_bad_params():
    with pytest.raises(ParameterError):
        RandomForest(n_trees=0)
    with pytest.raises(ParameterError):
        RandomForest().fit(np.zeros((0, 2)), np.zeros(0, int))
