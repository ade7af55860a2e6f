"""Random forest regression built from bootstrap CART trees."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import Dataset
from ._common import ModelError, design, kfold, rmse


@dataclass(frozen=True, eq=False)
class Tree:
    """Array-encoded binary regression tree; ``feature == -1`` marks a leaf.

    Samples with ``x[feature] <= threshold`` go to ``left``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = rows
        while active.size:
            f = self.feature[node[active]]
            inner = f >= 0
            active = active[inner]
            if not active.size:
                break
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


def _best_split(Xn, yn, order, max_features, min_leaf):
    m = len(yn)
    total = yn.sum()
    best = (-np.inf, -1, 0.0)
    visited = 0
    n_left = np.arange(1, m, dtype=float)
    size_ok = (n_left >= min_leaf) & (m - n_left >= min_leaf)
    for f in order:
        if visited >= max_features:
            break
        x = Xn[:, f]
        o = np.argsort(x, kind="stable")
        xs = x[o]
        if xs[0] == xs[-1]:
            continue  # constant features do not count towards max_features
        visited += 1
        valid = size_ok & (xs[:-1] < xs[1:])
        if not valid.any():
            continue
        sl = np.cumsum(yn[o])[:-1]
        score = sl * sl / n_left + (total - sl) ** 2 / (m - n_left)
        score = np.where(valid, score, -np.inf)
        k = int(np.argmax(score))
        if score[k] > best[0]:
            best = (score[k], f, xs[k])
    return best


def build_tree(X: np.ndarray, y: np.ndarray, max_features: int, min_leaf: int,
               rng: np.random.Generator, max_depth: int | None = None) -> Tree:
    """Grow one CART tree by exhaustive variance-reduction split search."""
    p = X.shape[1]
    feature, threshold, left, right, value, count = [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(np.mean(y[idx])))
        count.append(len(idx))
        return len(feature) - 1

    stack = [(np.arange(len(y)), new_node(np.arange(len(y))), 0)]
    while stack:
        idx, node, depth = stack.pop()
        yn = y[idx]
        if (len(idx) < 2 * min_leaf or yn.max() == yn.min()
                or (max_depth is not None and depth >= max_depth)):
            continue
        score, f, thr = _best_split(X[idx], yn, rng.permutation(p), max_features, min_leaf)
        if f < 0:
            continue
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = int(f), float(thr)
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((ri, right[node], depth + 1))
        stack.append((li, left[node], depth + 1))

    return Tree(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(value), np.array(count, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple
    n_trees: int
    max_features: int
    min_leaf: int
    per_tree_seed: tuple
    feature_names_in: tuple

    def predict(self, data) -> np.ndarray:
        X = design(data, self.feature_names_in)
        acc = np.zeros(len(X))
        for t in self.trees:
            acc += t.predict(X)
        return acc / len(self.trees)


def tree_seeds(seed: int, n_trees: int) -> tuple:
    return tuple(int(s) for s in np.random.SeedSequence(seed).generate_state(n_trees))


def _fit_forest(X, y, n_trees, max_features, min_leaf, seed, feature_names, max_depth=None):
    n, p = X.shape
    if not 1 <= max_features <= p:
        raise ModelError(f"max_features must lie in [1, {p}], got {max_features}")
    if min_leaf < 1:
        raise ModelError("min_leaf must be at least 1")
    seeds = tree_seeds(seed, n_trees)
    trees = []
    for s in seeds:
        rng = np.random.default_rng(s)
        boot = rng.integers(0, n, n)
        trees.append(build_tree(X[boot], y[boot], max_features, min_leaf, rng, max_depth))
    return ForestModel(tuple(trees), n_trees, max_features, min_leaf, seeds, tuple(feature_names))


def fit_rfr(train: Dataset, n_trees: int = 100, max_features: int | None = None,
            min_leaf: int = 5, seed: int = 0, features=None, max_depth: int | None = None) -> ForestModel:
    """Fit a random forest on ``train``.

    Each tree sees a bootstrap resample of the training set and considers
    ``max_features`` randomly drawn non-constant features per node.
    Deterministic for a given ``seed``.
    """
    features = tuple(train.feature_names if features is None else features)
    X = train.columns(features)
    mf = len(features) if max_features is None else max_features
    return _fit_forest(X, train.pv, n_trees, mf, min_leaf, seed, features, max_depth)


def tune_rfr(train: Dataset, grid, folds: int = 10, seed: int = 0, min_leaf: int = 5,
             features=None):
    """Grid point ``(n_trees, max_features)`` with the lowest mean CV RMSE.

    Ties go to fewer trees, then fewer features.
    """
    grid = sorted({(int(a), int(b)) for a, b in grid})
    if not grid:
        raise ValueError("empty tuning grid")
    if len(grid) == 1:
        return grid[0]
    features = tuple(train.feature_names if features is None else features)
    X, y = train.columns(features), train.pv
    best, best_score = None, np.inf
    for n_trees, mf in grid:
        scores = []
        for k, (tr, te) in enumerate(kfold(len(y), folds, seed)):
            model = _fit_forest(X[tr], y[tr], n_trees, mf, min_leaf, seed + k, features)
            scores.append(rmse(y[te], model.predict(X[te])))
        score = float(np.mean(scores))
        if score < best_score:
            best, best_score = (n_trees, mf), score
    return best
