from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


def sigmoid(z):
    """Logistic function, stable for large ``|z|``."""
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def log_loss_and_grad(w, b, X, y, l2=0.0):
    """Mean log-loss plus ``l2/2 * |w|^2`` and its gradient.

    Returns ``(loss, grad_w, grad_b)``. ``y`` holds 0/1 labels.
    """
    z = X @ w + b
    sign = 2.0 * y - 1.0
    loss = np.logaddexp(0.0, -sign * z).mean() + 0.5 * l2 * float(w @ w)
    r = (sigmoid(z) - y) / len(y)
    grad_w = np.asarray(X.T @ r).ravel() + l2 * w
    return loss, grad_w, float(r.sum())


class ConstantClassifier(ClassifierMixin, BaseEstimator):
    """Predicts the single class seen in training."""

    def fit(self, X, y):
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 1:
            raise ValueError("ConstantClassifier expects exactly one class")
        return self

    def predict_proba(self, X):
        n = X.shape[0] if hasattr(X, "shape") else len(X)
        return np.ones((n, 1))

    def predict(self, X):
        n = X.shape[0] if hasattr(X, "shape") else len(X)
        return np.full(n, self.classes_[0])


class LogisticRegressionGD(ClassifierMixin, BaseEstimator):
    """Binary logistic regression fit by mini-batch gradient descent.

    The objective is mean log-loss plus ``l2/2 * |w|^2`` (bias unpenalized).
    The L2 term is applied as a proximal shrink after each data step, which
    keeps very large ``l2`` values stable. Batches are drawn from a seeded
    permutation, so fitting is deterministic.

    Parameters
    ----------
    l2 : float
    learning_rate : float
    epochs : int
    batch_size : int
    threshold : float
        Positive-class probability above which :meth:`predict` says 1.
    seed : int
    """

    def __init__(self, l2=1e-4, learning_rate=0.5, epochs=50, batch_size=32, threshold=0.5, seed=0):
        self.l2 = l2
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.threshold = threshold
        self.seed = seed

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y, accept_sparse="csr")
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError(
                "logistic regression needs both classes; use ConstantClassifier for single-class data"
            )
        t = (y == self.classes_[1]).astype(float)
        n, d = X.shape
        rng = np.random.default_rng(self.seed)
        w, b = np.zeros(d), 0.0
        self.loss_curve_ = [log_loss_and_grad(w, b, X, t, self.l2)[0]]
        lr = self.learning_rate
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for a in range(0, n, self.batch_size):
                idx = order[a:a + self.batch_size]
                _, gw, gb = log_loss_and_grad(w, b, X[idx], t[idx], 0.0)
                w = (w - lr * gw) / (1.0 + lr * self.l2)
                b -= lr * gb
            self.loss_curve_.append(log_loss_and_grad(w, b, X, t, self.l2)[0])
        self.coef_ = w
        self.intercept_ = b
        self.n_features_in_ = d
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, accept_sparse="csr")
        if X.shape[1] != self.coef_.shape[0]:
            raise ValueError(f"expected {self.coef_.shape[0]} features, got {X.shape[1]}")
        return np.asarray(X @ self.coef_).ravel() + self.intercept_

    def predict_proba(self, X):
        p = sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return np.where(self.predict_proba(X)[:, 1] > self.threshold, self.classes_[1], self.classes_[0])


def predict_proba_one(model: LogisticRegressionGD, x) -> float:
    """Positive-class probability of a single feature vector."""
    x = x if sp.issparse(x) else np.asarray(x, dtype=float).reshape(1, -1)
    return float(model.predict_proba(x)[0, 1])
