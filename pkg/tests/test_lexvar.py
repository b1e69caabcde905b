import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cohort_sieve.lexvar import SkipGramEmbeddings, expand_variants, levenshtein, load_variants, save_variants

from oracles import levenshtein_recursive


def test_known_distances():
    assert levenshtein("creatinine", "creatinin") == 1
    assert levenshtein("etoh", "etoh") == 0
    assert levenshtein("alcohol", "alchool") == 2
    assert levenshtein("", "abc") == 3


words = st.text(alphabet="abcd", max_size=7)


@settings(max_examples=300, deadline=None)
@given(words, words, words)
def test_metric_axioms(a, b, c):
    assert levenshtein(a, b) == levenshtein(b, a) == levenshtein_recursive(a, b)
    assert (levenshtein(a, b) == 0) == (a == b)
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)



@settings(max_examples=200, deadline=None)
@given(st.text(alphabet="abcdéz-", max_size=40), st.text(alphabet="abcdéz-", max_size=40))
def test_long_words_match_oracle(a, b):
    assert levenshtein(a, b) == levenshtein_recursive(a, b)

def _contexts_corpus(rng, n=3000):
    """``alpha``, ``alpah`` and ``alphq`` used in the same contexts."""
    groups = [["red", "green", "blue", "yellow"], ["cat", "dog", "horse", "cow"], ["run", "walk", "jump", "swim"]]
    sentences = []
    for _ in range(n):
        g = rng.choice(groups)
        s = [rng.choice(g) for _ in range(6)]
        if g is groups[0] and rng.random() < 0.5:
            s[rng.randrange(6)] = rng.choice(["alpha", "alpha", "alpah", "alphq"])
        sentences.append(s)
    return sentences


@pytest.fixture(scope="module")
def small_model():
    sents = _contexts_corpus(random.Random(3))
    return SkipGramEmbeddings(dim=16, window=3, epochs=4, min_count=3, batch_size=256,
                              min_corpus_tokens=1000, seed=5).fit(sents), sents


def test_shared_contexts_make_neighbours(small_model):
    model, _ = small_model
    top = [w for w, _ in model.nearest_neighbors("alpha", 5)[0]]
    assert "alpah" in top


def test_loss_decreases(small_model):
    model, _ = small_model
    assert model.loss_history_[-1] < model.loss_history_[0]


def test_seeded_runs_identical(small_model):
    model, sents = small_model
    again = SkipGramEmbeddings(dim=16, window=3, epochs=4, min_count=3, batch_size=256,
                               min_corpus_tokens=1000, seed=5).fit(sents)
    assert again.index_to_word_ == model.index_to_word_
    assert np.array_equal(again.vectors_, model.vectors_)


def test_min_count_gate():
    sents = [["common", "other"] * 10 for _ in range(60)] + [["rare"]] * 3
    model = SkipGramEmbeddings(dim=8, min_count=5, epochs=1, min_corpus_tokens=10).fit(sents)
    assert "rare" not in model and "common" in model


def test_small_corpus_rejected():
    with pytest.raises(ValueError):
        SkipGramEmbeddings(min_corpus_tokens=1000).fit([["a", "b"]] * 10)


def test_neighbour_count_capped_and_self_excluded(small_model):
    model, _ = small_model
    n_vocab = len(model.index_to_word_)
    found, oov = model.nearest_neighbors("cat", 500)
    assert not oov and len(found) == n_vocab - 1
    assert "cat" not in [w for w, _ in found]
    assert model.nearest_neighbors("zzz", 3) == ([], True)


def test_variants_gates(small_model):
    model, _ = small_model
    lex = expand_variants(model, ["alpha", "cat", "red"], k=50)
    assert lex["alpha"] == {"alphq"}  # the transposition alpah is distance 2
    assert lex["cat"] == set() and lex["red"] == set()


class _FixedNeighbours:
    """Model stub with hand-chosen neighbours and similarities."""

    def __init__(self, table):
        self.table = table

    def nearest_neighbors(self, word, k):
        return self.table.get(word, [])[:k], word not in self.table


def test_distance_two_excluded_even_when_very_similar():
    stub = _FixedNeighbours({"metformin": [("metfromin", 0.95), ("metfornin", 0.6), ("insulin", 0.5)],
                             "mi": [("mi", 1.0), ("m", 0.9)]})
    lex = expand_variants(stub, ["metformin", "mi"], k=10)
    assert lex == {"metformin": {"metfornin"}, "mi": set()}


@settings(max_examples=20, deadline=None)
@given(st.permutations(["alpha", "cat", "dog", "horse", "green", "alpah"]))
def test_variants_order_free(small_model, order):
    model, _ = small_model
    lex = expand_variants(model, order, k=20)
    assert lex == expand_variants(model, sorted(order), k=20)
    for word, variants in lex.items():
        assert all(levenshtein(word, v) == 1 for v in variants)


def test_variants_roundtrip(tmp_path):
    lex = {"aspirin": {"asprin", "aspirn"}, "mi": set()}
    save_variants(lex, tmp_path / "v.tsv", "# h")
    assert load_variants(tmp_path / "v.tsv") == lex


def test_embedding_file_roundtrip(small_model, tmp_path):
    model, _ = small_model
    model.save(tmp_path / "e.bin")
    back = SkipGramEmbeddings.load(tmp_path / "e.bin")
    assert back.index_to_word_ == model.index_to_word_
    assert np.array_equal(back.vectors_, model.vectors_)
