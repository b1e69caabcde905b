from __future__ import annotations

from collections import Counter
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted


class TfidfVectorizer(TransformerMixin, BaseEstimator):
    """tf-idf over pre-tokenized documents.

    Term frequency is sublinear (``1 + ln tf``) and idf is smoothed,
    ``ln((1 + N) / (1 + df)) + 1``. Rows are L2-normalized when ``norm`` is
    ``"l2"``. The vocabulary is ordered by descending document frequency,
    then token, and can be capped with ``max_features``.
    """

    def __init__(self, min_df=2, norm="l2", max_features=None):
        self.min_df = min_df
        self.norm = norm
        self.max_features = max_features

    def fit(self, docs: Sequence[Sequence[str]], y=None):
        docs = list(docs)
        if not docs:
            raise ValueError("cannot fit tf-idf on an empty corpus")
        df = Counter()
        for doc in docs:
            df.update(set(doc))
        tokens = sorted((t for t, c in df.items() if c >= self.min_df), key=lambda t: (-df[t], t))
        if self.max_features is not None:
            tokens = tokens[: self.max_features]
        n = len(docs)
        self.n_docs_ = n
        self.vocabulary_ = {t: i for i, t in enumerate(tokens)}
        self.df_ = np.array([df[t] for t in tokens], dtype=np.int64)
        self.idf_ = np.log((1.0 + n) / (1.0 + self.df_)) + 1.0
        return self

    def transform(self, docs: Sequence[Sequence[str]]) -> sp.csr_matrix:
        check_is_fitted(self, "idf_")
        indptr, indices, data = [0], [], []
        vocab = self.vocabulary_
        for doc in docs:
            counts = Counter(t for t in doc if t in vocab)
            cols = sorted(vocab[t] for t in counts)
            by_col = {vocab[t]: c for t, c in counts.items()}
            vals = np.array([(1.0 + np.log(by_col[c])) * self.idf_[c] for c in cols])
            if self.norm == "l2" and len(vals):
                vals = vals / np.linalg.norm(vals)
            indices += cols
            data += vals.tolist()
            indptr.append(len(indices))
        return sp.csr_matrix((np.array(data, dtype=float), np.array(indices, dtype=np.int64),
                              np.array(indptr, dtype=np.int64)), shape=(len(indptr) - 1, len(vocab)))

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "vocabulary_")
        return np.array(sorted(self.vocabulary_, key=self.vocabulary_.get), dtype=object)
