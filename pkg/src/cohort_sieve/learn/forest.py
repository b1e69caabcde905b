from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


def gini(counts: np.ndarray) -> np.ndarray:
    """Gini impurity of class-count rows."""
    counts = np.atleast_2d(counts).astype(float)
    total = counts.sum(axis=1)
    safe = np.where(total == 0, 1.0, total)
    return 1.0 - ((counts / safe[:, None]) ** 2).sum(axis=1)


class _Tree:
    """Array-backed binary tree; leaves store class distributions."""

    def __init__(self, n_classes, max_depth, max_features, min_samples_split, rng):
        self.n_classes = n_classes
        self.max_depth = max_depth
        self.max_features = max_features
        self.min_samples_split = min_samples_split
        self.rng = rng
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []

    def _new_node(self):
        for arr in (self.feature, self.threshold, self.left, self.right):
            arr.append(-1)
        self.value.append(None)
        return len(self.value) - 1

    def _best_split(self, X, y):
        n, p = X.shape
        parent = np.bincount(y, minlength=self.n_classes)
        best = (gini(parent)[0], None, None)
        for f in self.rng.permutation(p)[: self.max_features]:
            order = np.argsort(X[:, f], kind="stable")
            xs, ys = X[order, f], y[order]
            onehot = np.eye(self.n_classes, dtype=np.int64)[ys]
            left = np.cumsum(onehot, axis=0)[:-1]
            right = parent - left
            valid = xs[1:] > xs[:-1]
            if not valid.any():
                continue
            nl = np.arange(1, n)
            score = (nl * gini(left) + (n - nl) * gini(right)) / n
            score = np.where(valid, score, np.inf)
            k = int(np.argmin(score))
            if score[k] < best[0] - 1e-12:
                best = (score[k], int(f), 0.5 * (xs[k] + xs[k + 1]))
        return best[1], best[2]

    def build(self, X, y, depth=0):
        node = self._new_node()
        counts = np.bincount(y, minlength=self.n_classes)
        self.value[node] = counts / counts.sum()
        if depth >= self.max_depth or len(y) < self.min_samples_split or (counts > 0).sum() == 1:
            return node
        f, thr = self._best_split(X, y)
        if f is None:
            return node
        mask = X[:, f] <= thr
        self.feature[node], self.threshold[node] = f, thr
        self.left[node] = self.build(X[mask], y[mask], depth + 1)
        self.right[node] = self.build(X[~mask], y[~mask], depth + 1)
        return node

    def freeze(self):
        self.feature = np.array(self.feature)
        self.threshold = np.array(self.threshold, dtype=float)
        self.left = np.array(self.left)
        self.right = np.array(self.right)
        self.value = np.vstack(self.value)
        del self.rng
        return self

    def apply(self, X):
        nodes = np.zeros(len(X), dtype=np.int64)
        active = self.feature[nodes] >= 0
        while active.any():
            idx = np.where(active)[0]
            f = self.feature[nodes[idx]]
            go_left = X[idx, f] <= self.threshold[nodes[idx]]
            nodes[idx] = np.where(go_left, self.left[nodes[idx]], self.right[nodes[idx]])
            active = self.feature[nodes] >= 0
        return nodes

    def predict_proba(self, X):
        return self.value[self.apply(X)]


class RandomForest(ClassifierMixin, BaseEstimator):
    """Bagged Gini decision trees voting by majority.

    Each tree sees a bootstrap sample and a random subset of
    ``max_features`` features at every split (``"sqrt"`` by default).
    """

    def __init__(self, n_trees=25, max_depth=8, max_features="sqrt", min_samples_split=2, seed=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.max_features = max_features
        self.min_samples_split = min_samples_split
        self.seed = seed

    def _n_split_features(self, p):
        if self.max_features == "sqrt":
            return max(1, int(np.sqrt(p)))
        if self.max_features is None:
            return p
        return max(1, min(p, int(self.max_features)))

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        if len(y) < 2:
            raise ValueError("a forest needs at least two examples")
        self.classes_, encoded = np.unique(y, return_inverse=True)
        n, p = X.shape
        master = np.random.default_rng(self.seed)
        self.trees_ = []
        for _ in range(self.n_trees):
            rng = np.random.default_rng(master.integers(2**63))
            sample = rng.integers(0, n, n)
            tree = _Tree(len(self.classes_), self.max_depth, self._n_split_features(p),
                         self.min_samples_split, rng)
            tree.build(X[sample], encoded[sample])
            self.trees_.append(tree.freeze())
        self.n_features_in_ = p
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "trees_")
        X = check_array(X)
        return np.mean([t.predict_proba(X) for t in self.trees_], axis=0)

    def predict(self, X):
        check_is_fitted(self, "trees_")
        X = check_array(X)
        votes = np.zeros((len(X), len(self.classes_)), dtype=np.int64)
        for t in self.trees_:
            winner = np.argmax(t.predict_proba(X), axis=1)
            votes[np.arange(len(X)), winner] += 1
        return self.classes_[np.argmax(votes, axis=1)]
