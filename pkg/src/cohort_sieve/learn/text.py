"""Classifiers over pre-tokenized documents.

All classifiers here take a list of token lists as ``X`` and binary labels
as ``y``.
"""
from __future__ import annotations

import copy
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .forest import RandomForest
from .logistic import LogisticRegressionGD
from .tfidf import TfidfVectorizer


def _labels(y):
    y = np.asarray(y)
    if y.dtype == bool:
        y = y.astype(int)
    return y


def positive_proba(model, X) -> np.ndarray:
    """Probability of class 1, zero when the model never saw class 1."""
    proba = model.predict_proba(X)
    classes = list(model.classes_)
    if 1 not in classes:
        return np.zeros(proba.shape[0])
    return proba[:, classes.index(1)]


class TfidfLogisticClassifier(ClassifierMixin, BaseEstimator):
    """tf-idf features followed by logistic regression."""

    def __init__(self, min_df=2, l2=1e-4, learning_rate=0.5, epochs=30, batch_size=32, seed=0):
        self.min_df = min_df
        self.l2 = l2
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def fit(self, X, y):
        y = _labels(y)
        self.vectorizer_ = TfidfVectorizer(min_df=self.min_df).fit(X)
        self.model_ = LogisticRegressionGD(l2=self.l2, learning_rate=self.learning_rate,
                                           epochs=self.epochs, batch_size=self.batch_size,
                                           seed=self.seed).fit(self.vectorizer_.transform(X), y)
        self.classes_ = self.model_.classes_
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict_proba(self.vectorizer_.transform(X))

    def predict(self, X):
        return self.model_.predict(self.vectorizer_.transform(X))


def mean_embedding(embeddings, docs: Sequence[Sequence[str]]) -> np.ndarray:
    """Average of in-vocabulary word vectors per document; zeros if none."""
    vocab, vectors = embeddings.vocabulary_, embeddings.vectors_
    out = np.zeros((len(docs), vectors.shape[1]))
    for i, doc in enumerate(docs):
        ids = [vocab[w] for w in doc if w in vocab]
        if ids:
            out[i] = vectors[ids].mean(axis=0)
    return out


class EmbeddingAverageClassifier(ClassifierMixin, BaseEstimator):
    """Logistic regression on the mean of pre-trained word vectors.

    ``embeddings`` is a fitted :class:`~cohort_sieve.lexvar.SkipGramEmbeddings`.
    Features are standardized with training statistics before the
    regression, since averaged vectors are small in magnitude.
    """

    def __init__(self, embeddings=None, l2=1e-4, learning_rate=0.5, epochs=30, batch_size=32, seed=0):
        self.embeddings = embeddings
        self.l2 = l2
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def _features(self, X):
        return (mean_embedding(self.embeddings, X) - self.mean_) / self.scale_

    def fit(self, X, y):
        if self.embeddings is None:
            raise ValueError("EmbeddingAverageClassifier needs fitted embeddings")
        y = _labels(y)
        raw = mean_embedding(self.embeddings, X)
        self.mean_ = raw.mean(axis=0)
        std = raw.std(axis=0)
        self.scale_ = np.where(std > 0, std, 1.0)
        self.model_ = LogisticRegressionGD(l2=self.l2, learning_rate=self.learning_rate,
                                           epochs=self.epochs, batch_size=self.batch_size,
                                           seed=self.seed).fit(self._features(X), y)
        self.classes_ = self.model_.classes_
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict_proba(self._features(X))

    def predict(self, X):
        return self.model_.predict(self._features(X))


def stratified_fold_ids(y, folds: int, seed: int = 0) -> np.ndarray:
    """Fold index per example; each class is dealt round-robin after shuffling."""
    y = np.asarray(y)
    if folds < 2:
        raise ValueError("need at least two folds")
    if folds > len(y):
        raise ValueError(f"{folds} folds requested for {len(y)} examples")
    rng = np.random.default_rng(seed)
    ids = np.empty(len(y), dtype=np.int64)
    offset = 0
    for cls in np.unique(y):
        members = rng.permutation(np.flatnonzero(y == cls))
        ids[members] = (np.arange(len(members)) + offset) % folds
        offset += len(members)
    return ids


def out_of_fold_probabilities(estimators, X, y, fold_ids) -> np.ndarray:
    """Positive-class probabilities of each estimator, predicted out of fold.

    Row ``i`` only depends on labels outside the fold of ``i``.
    """
    y = _labels(y)
    fold_ids = np.asarray(fold_ids)
    out = np.zeros((len(y), len(estimators)))
    for k in np.unique(fold_ids):
        test = np.flatnonzero(fold_ids == k)
        train = np.flatnonzero(fold_ids != k)
        X_train = [X[i] for i in train]
        X_test = [X[i] for i in test]
        for j, est in enumerate(estimators):
            if len(np.unique(y[train])) < 2:
                out[test, j] = float(y[train].mean())
                continue
            fitted = copy.deepcopy(est).fit(X_train, y[train])
            out[test, j] = positive_proba(fitted, X_test)
    return out


class StackedClassifier(ClassifierMixin, BaseEstimator):
    """Two text classifiers combined by a logistic meta-model.

    The meta-model is trained on out-of-fold probabilities of the two base
    models (k-fold cross-fitting); the base models are then refit on all the
    data for inference.
    """

    def __init__(self, base_a=None, base_b=None, meta=None, folds=5, threshold=0.5, seed=0):
        self.base_a = base_a
        self.base_b = base_b
        self.meta = meta
        self.folds = folds
        self.threshold = threshold
        self.seed = seed

    def fit(self, X, y):
        X = list(X)
        y = _labels(y)
        if len(np.unique(y)) != 2:
            raise ValueError("stacking needs both classes; use a constant classifier instead")
        bases = [self.base_a or TfidfLogisticClassifier(seed=self.seed), self.base_b]
        if bases[1] is None:
            raise ValueError("base_b (embedding classifier) is required")
        self.fold_ids_ = stratified_fold_ids(y, self.folds, self.seed)
        self.meta_features_ = out_of_fold_probabilities(bases, X, y, self.fold_ids_)
        meta = self.meta or LogisticRegressionGD(l2=1e-4, learning_rate=1.0, epochs=200,
                                                 batch_size=64, seed=self.seed)
        self.meta_ = copy.deepcopy(meta).fit(self.meta_features_, y)
        self.bases_ = [copy.deepcopy(b).fit(X, y) for b in bases]
        self.classes_ = self.meta_.classes_
        return self

    def base_probabilities(self, X) -> np.ndarray:
        check_is_fitted(self, "bases_")
        X = list(X)
        return np.column_stack([positive_proba(b, X) for b in self.bases_])

    def predict_proba(self, X):
        return self.meta_.predict_proba(self.base_probabilities(X))

    def predict(self, X):
        return np.where(self.predict_proba(X)[:, 1] > self.threshold, self.classes_[1], self.classes_[0])


class TfidfForestClassifier(ClassifierMixin, BaseEstimator):
    """Random forest over dense tf-idf features of the most frequent tokens."""

    def __init__(self, min_df=2, max_features=300, n_trees=25, max_depth=8, seed=0):
        self.min_df = min_df
        self.max_features = max_features
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.seed = seed

    def fit(self, X, y):
        y = _labels(y)
        self.vectorizer_ = TfidfVectorizer(min_df=self.min_df, max_features=self.max_features).fit(X)
        self.forest_ = RandomForest(n_trees=self.n_trees, max_depth=self.max_depth,
                                    seed=self.seed).fit(self.vectorizer_.transform(X).toarray(), y)
        self.classes_ = self.forest_.classes_
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "forest_")
        return self.forest_.predict_proba(self.vectorizer_.transform(X).toarray())

    def predict(self, X):
        check_is_fitted(self, "forest_")
        return self.forest_.predict(self.vectorizer_.transform(X).toarray())
