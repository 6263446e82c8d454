"""Random forest classifier: axis-aligned CART trees with Gini impurity,
bootstrap resampling and per-node feature subsampling.

Class labels are non-negative integers. Votes and leaf majorities break ties
toward the lowest label, so prediction is fully deterministic.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import FormatError, ParameterError


def gini(counts):
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return 1.0 - float(np.dot(p, p))


def _n_features(spec, k):
    if spec is None or spec == "all":
        return k
    if spec == "sqrt":
        return max(1, int(math.sqrt(k)))
    if spec == "log2":
        return max(1, int(math.log2(k)))
    if isinstance(spec, float) and 0 < spec <= 1:
        return max(1, int(round(spec * k)))
    spec = int(spec)
    if spec < 1:
        raise ParameterError("feature subsample must be >= 1")
    return min(spec, k)


def _best_split(X, y, idx, features, n_classes, min_leaf):
    """Lowest weighted Gini split over ``features``; ``None`` if no legal split."""
    n = len(idx)
    parent = np.bincount(y[idx], minlength=n_classes)
    best = None
    best_score = np.inf  # weighted Gini never exceeds the parent's, so any legal split is accepted
    for f in features:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), y[idx][order]] = 1.0
        left = np.cumsum(onehot, axis=0)[:-1]          # split after position i
        nl = np.arange(1, n)
        right = parent[None, :] - left
        nr = n - nl
        legal = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
        if not legal.any():
            continue
        gl = 1.0 - np.einsum("ij,ij->i", left, left) / nl**2
        gr = 1.0 - np.einsum("ij,ij->i", right, right) / nr**2
        score = (nl * gl + nr * gr) / n
        score[~legal] = np.inf
        i = int(np.argmin(score))
        if score[i] < best_score:
            best_score = score[i]
            best = (int(f), float((xs[i] + xs[i + 1]) / 2.0))
    return best


class DecisionTree:
    """Array-backed binary tree. ``feature[i] == -1`` marks a leaf."""

    def __init__(self, max_depth=None, min_leaf=1, max_features=None):
        self.max_depth = max_depth
        self.min_leaf = max(1, int(min_leaf))
        self.max_features = max_features
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []

    def _leaf(self, label):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(int(label))
        return len(self.feature) - 1

    def fit(self, X, y, n_classes=None, rng=None):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if len(y) == 0:
            raise ParameterError("cannot fit a tree on zero samples")
        n_classes = int(n_classes or y.max() + 1)
        rng = rng if rng is not None else np.random.default_rng(0)
        k = X.shape[1]
        m = _n_features(self.max_features, k)
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []

        def grow(idx, depth):
            counts = np.bincount(y[idx], minlength=n_classes)
            label = int(np.argmax(counts))
            stop = (
                counts[label] == len(idx)
                or len(idx) < 2 * self.min_leaf
                or (self.max_depth is not None and depth >= self.max_depth)
            )
            if stop:
                return self._leaf(label)
            perm = rng.permutation(k)
            split = _best_split(X, y, idx, perm[:m], n_classes, self.min_leaf)
            if split is None and m < k:
                # the sampled features cannot separate this node; try the rest
                split = _best_split(X, y, idx, perm[m:], n_classes, self.min_leaf)
            if split is None:
                return self._leaf(label)
            f, thr = split
            node = self._leaf(label)
            go_left = X[idx, f] <= thr
            self.feature[node], self.threshold[node] = f, thr
            self.left[node] = grow(idx[go_left], depth + 1)
            self.right[node] = grow(idx[~go_left], depth + 1)
            return node

        grow(np.arange(len(y)), 0)
        return self

    def apply(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.empty(len(X), dtype=np.int64)
        for r, x in enumerate(X):
            i = 0
            while self.feature[i] >= 0:
                i = self.left[i] if x[self.feature[i]] <= self.threshold[i] else self.right[i]
            out[r] = i
        return out

    def predict(self, X) -> np.ndarray:
        return np.asarray(self.value, dtype=np.int64)[self.apply(X)]

    @property
    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0) if self.feature else 0

    def to_dict(self):
        return {
            "feature": list(self.feature),
            "threshold": list(self.threshold),
            "left": list(self.left),
            "right": list(self.right),
            "value": list(self.value),
        }

    @classmethod
    def from_dict(cls, d):
        tree = cls()
        try:
            tree.feature = [int(v) for v in d["feature"]]
            tree.threshold = [float(v) for v in d["threshold"]]
            tree.left = [int(v) for v in d["left"]]
            tree.right = [int(v) for v in d["right"]]
            tree.value = [int(v) for v in d["value"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed tree: {exc}") from None
        lens = {len(tree.feature), len(tree.threshold), len(tree.left), len(tree.right), len(tree.value)}
        if len(lens) != 1 or not tree.feature:
            raise FormatError("malformed tree: ragged or empty node arrays")
        return tree


class RandomForest:
    def __init__(self, n_trees=100, max_depth=12, min_leaf=2, max_features="sqrt",
                 bootstrap=True, seed=0, workers=1):
        if n_trees < 1:
            raise ParameterError("n_trees must be >= 1")
        self.n_trees = int(n_trees)
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = int(seed)
        self.workers = workers
        self.n_classes = 0
        self.trees = []

    def fit(self, X, y, n_classes=None):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if len(y) == 0:
            raise ParameterError("cannot fit a forest on zero samples")
        self.n_classes = int(n_classes or y.max() + 1)

        def one(t):
            # per-tree stream: results do not depend on scheduling
            rng = np.random.default_rng([self.seed, t])
            rows = rng.integers(0, len(y), len(y)) if self.bootstrap else np.arange(len(y))
            tree = DecisionTree(self.max_depth, self.min_leaf, self.max_features)
            return tree.fit(X[rows], y[rows], self.n_classes, rng)

        if self.workers and self.workers > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                self.trees = list(pool.map(one, range(self.n_trees)))
        else:
            self.trees = [one(t) for t in range(self.n_trees)]
        return self

    def votes(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        tally = np.zeros((len(X), self.n_classes), dtype=np.int64)
        for tree in self.trees:
            np.add.at(tally, (np.arange(len(X)), tree.predict(X)), 1)
        return tally

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.votes(X), axis=1)  # argmax keeps the lowest label on ties
