import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cohort_sieve.learn import (
    ConstantClassifier,
    EmbeddingAverageClassifier,
    LogisticRegressionGD,
    RandomForest,
    StackedClassifier,
    TfidfForestClassifier,
    TfidfLogisticClassifier,
    TfidfVectorizer,
    load_model,
    log_loss_and_grad,
    model_summary,
    out_of_fold_probabilities,
    predict_proba_one,
    save_model,
    sigmoid,
    stratified_fold_ids,
)
from cohort_sieve.lexvar import SkipGramEmbeddings

from oracles import numeric_gradient


def relative_error(a, b):
    return np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b)))


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n, d = 30, int(rng.integers(2, 50))
    X, y = rng.normal(size=(n, d)), rng.integers(0, 2, n).astype(float)
    w, b, l2 = rng.normal(size=d), float(rng.normal()), 0.1
    _, gw, gb = log_loss_and_grad(w, b, X, y, l2)
    num_w = numeric_gradient(lambda v: log_loss_and_grad(v, b, X, y, l2)[0], w)
    num_b = numeric_gradient(lambda v: log_loss_and_grad(w, v[0], X, y, l2)[0], np.array([b]))
    assert relative_error(gw, num_w) < 1e-4 and relative_error(np.array([gb]), num_b) < 1e-4


def test_sigmoid_edges():
    assert sigmoid(0.0) == 0.5
    assert sigmoid(40.0) >= 1 - 1e-9 and np.isfinite(sigmoid(-1000.0))


def test_separable_pair_and_l2_limit():
    X, y = np.array([[1.0], [-1.0]]), np.array([1, 0])
    assert LogisticRegressionGD(epochs=200).fit(X, y).score(X, y) == 1.0
    Xb = np.array([[1.0], [2.0], [3.0], [4.0]])
    yb = np.array([1, 1, 1, 0])
    strong = LogisticRegressionGD(l2=1e6, epochs=300, learning_rate=0.5).fit(Xb, yb)
    assert abs(strong.coef_[0]) < 1e-4
    assert abs(predict_proba_one(strong, [1.0]) - 0.75) < 0.02


def test_single_class_and_dimension_errors():
    with pytest.raises(ValueError, match="ConstantClassifier"):
        LogisticRegressionGD().fit(np.ones((3, 2)), np.ones(3))
    model = LogisticRegressionGD(epochs=5).fit(np.eye(2), [0, 1])
    with pytest.raises(ValueError):
        model.predict(np.ones((1, 3)))
    assert list(ConstantClassifier().fit(None, [0, 0]).predict([1, 2, 3])) == [0, 0, 0]


def test_mean_probability_near_prior():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(400, 5))
    y = (X[:, 0] + rng.normal(scale=2.0, size=400) > 1.0).astype(int)
    model = LogisticRegressionGD(epochs=100).fit(X, y)
    assert abs(model.predict_proba(X)[:, 1].mean() - y.mean()) < 0.15


def test_tfidf_formulas():
    vec = TfidfVectorizer(min_df=1, norm=None).fit([["a", "b"], ["a"], ["a", "c"]])
    idf = dict(zip(vec.get_feature_names_out(), vec.idf_))
    assert idf["a"] == 1.0 and math.isclose(idf["b"], math.log(4 / 2) + 1)
    row = vec.transform([["a", "a", "a"]]).toarray()[0]
    assert math.isclose(row[vec.vocabulary_["a"]], 1 + math.log(3))
    assert "b" not in TfidfVectorizer(min_df=2).fit([["a", "b"], ["a"]]).vocabulary_
    normed = TfidfVectorizer(min_df=1).fit([["a", "b"], ["a"]])
    assert normed.transform([["zz"]]).nnz == 0
    assert math.isclose(np.linalg.norm(normed.transform([["b"]]).toarray()), 1.0)
    with pytest.raises(ValueError):
        TfidfVectorizer().fit([])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.sampled_from("abcdefg"), min_size=1, max_size=6), min_size=1, max_size=12), st.randoms())
def test_tfidf_order_free(docs, rnd):
    shuffled = docs[:]
    rnd.shuffle(shuffled)
    a, b = TfidfVectorizer(min_df=1).fit(docs), TfidfVectorizer(min_df=1).fit(shuffled)
    assert a.vocabulary_ == b.vocabulary_ and np.array_equal(a.idf_, b.idf_)


def _separated_docs(n, rng):
    pos, neg, shared = ["wine", "beer", "drunk", "bottle"], ["walk", "swim", "tea", "salad"], ["the", "a", "today"]
    docs, y = [], []
    for i in range(n):
        label = i % 2
        vocab = pos if label else neg
        docs.append([rng.choice(vocab + shared) for _ in range(8)])
        y.append(label)
    return docs, np.array(y)


@pytest.fixture(scope="module")
def embeddings():
    rng = random.Random(1)
    docs, _ = _separated_docs(800, rng)
    return SkipGramEmbeddings(dim=12, window=3, epochs=2, min_count=2, min_corpus_tokens=100, seed=1).fit(docs)


def test_embedding_classifier(embeddings):
    rng = random.Random(2)
    X, y = _separated_docs(200, rng)
    Xt, yt = _separated_docs(100, rng)
    model = EmbeddingAverageClassifier(embeddings, epochs=50).fit(X, y)
    assert model.score(Xt, yt) >= 0.9
    oov = model.predict_proba([["zzz", "qqq"], []])[:, 1]
    assert oov[0] == oov[1] and np.isfinite(oov).all()
    assert np.array_equal(model.predict_proba([X[0]]), model.predict_proba([list(X[0])]))


def test_stacking_with_one_noisy_base(embeddings):
    rng = random.Random(3)
    X, y = _separated_docs(200, rng)
    Xt, yt = _separated_docs(100, rng)
    good = TfidfLogisticClassifier(min_df=1)
    noisy = EmbeddingAverageClassifier(embeddings, epochs=1, learning_rate=1e-6)
    stacked = StackedClassifier(good, noisy, folds=5).fit(X, y)
    alone = TfidfLogisticClassifier(min_df=1).fit(X, y)
    assert stacked.score(Xt, yt) >= alone.score(Xt, yt) - 0.05


def test_out_of_fold_rows_ignore_their_own_labels():
    rng = random.Random(4)
    X, y = _separated_docs(60, rng)
    folds = stratified_fold_ids(y, 3, seed=0)
    base = out_of_fold_probabilities([TfidfLogisticClassifier(min_df=1)], X, y, folds)
    poisoned = y.copy()
    idx = np.flatnonzero(folds == 0)
    poisoned[idx] = np.random.default_rng(0).permutation(poisoned[idx])
    after = out_of_fold_probabilities([TfidfLogisticClassifier(min_df=1)], X, poisoned, folds)
    assert np.array_equal(base[folds == 0], after[folds == 0])
    assert not np.array_equal(base[folds != 0], after[folds != 0])


def test_fold_errors():
    with pytest.raises(ValueError):
        stratified_fold_ids([0, 1], 3)


def test_forest_behaviour():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 4))
    assert not RandomForest(n_trees=5, seed=0).fit(X, np.zeros(60, dtype=int)).predict(X).any()
    y = (X[:, 2] > 0).astype(int)
    stumps = RandomForest(n_trees=15, max_depth=1, max_features=None, seed=0).fit(X, y)
    assert stumps.score(X, y) >= 0.95
    a = RandomForest(n_trees=7, seed=3).fit(X, y).predict_proba(X[:10])
    b = RandomForest(n_trees=7, seed=3).fit(X, y).predict_proba(X[:10])
    assert np.array_equal(a, b)


def test_text_forest_with_no_positives():
    docs = [["dka", "insulin"], ["knee", "pain"], ["fever"]] * 10
    model = TfidfForestClassifier(min_df=1, n_trees=5).fit(docs, [0] * 30)
    assert not model.predict([["dka", "ketoacidosis"], ["x"]]).any()


def test_model_file_roundtrip(tmp_path):
    docs = [["wine", "beer"], ["tea", "walk"]] * 5
    model = TfidfLogisticClassifier(min_df=1).fit(docs, [1, 0] * 5)
    save_model(model, tmp_path / "m.model", criterion="X")
    back = load_model(tmp_path / "m.model")
    assert np.array_equal(back.predict_proba(docs), model.predict_proba(docs))
    assert "top positive" in model_summary(model)
