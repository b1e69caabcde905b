"""Word embeddings and misspelling variants of terminology words.

Embeddings are trained with skip-gram and negative sampling. Variants of a
term word are its nearest embedding neighbours that sit at edit distance one.
"""
from __future__ import annotations

import struct
from collections import Counter
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

_MAGIC = b"CSEMB\x01"


@lru_cache(maxsize=4096)
def _char_masks(word: str) -> dict[str, int]:
    masks: dict[str, int] = {}
    for i, ch in enumerate(word):
        masks[ch] = masks.get(ch, 0) | (1 << i)
    return masks


def levenshtein(a: str, b: str) -> int:
    """Unit-cost insert/delete/substitute edit distance.

    Bit-parallel column recurrence: one integer holds the vertical deltas
    of a whole DP column, so each character of the longer word costs a
    handful of bit operations.
    """
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    m = len(b)
    if m == 0:
        return len(a)
    get = _char_masks(b).get
    mask, last = (1 << m) - 1, 1 << (m - 1)
    pv, mv, dist = mask, 0, m
    for ch in a:
        eq = get(ch, 0)
        xv = eq | mv
        xh = ((((eq & pv) + pv) & mask) ^ pv) | eq
        ph = mv | (~(xh | pv) & mask)
        mh = pv & xh
        if ph & last:
            dist += 1
        elif mh & last:
            dist -= 1
        ph = ((ph << 1) | 1) & mask
        mh = (mh << 1) & mask
        pv = mh | (~(xv | ph) & mask)
        mv = ph & xv
    return dist


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class SkipGramEmbeddings(BaseEstimator):
    """Skip-gram word vectors trained with negative sampling.

    Training is sequential and mini-batched, so a fixed ``seed`` reproduces
    the vectors exactly.

    Parameters
    ----------
    dim : int
        Vector dimension (at least 8).
    window : int
        Context words taken on each side of the centre word.
    negatives : int
        Noise words drawn per positive pair from the unigram^0.75 table.
    epochs : int
    min_count : int
        Words seen fewer times are dropped from the vocabulary.
    learning_rate : float
        Initial step size, decayed linearly to 1e-4 of its value.
    batch_size : int
    min_corpus_tokens : int
        Smaller corpora are rejected.
    seed : int
    """

    def __init__(self, dim=100, window=5, negatives=5, epochs=5, min_count=5,
                 learning_rate=0.025, batch_size=256, min_corpus_tokens=10_000, seed=0):
        self.dim = dim
        self.window = window
        self.negatives = negatives
        self.epochs = epochs
        self.min_count = min_count
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.min_corpus_tokens = min_corpus_tokens
        self.seed = seed

    def _build_vocab(self, sentences):
        counts = Counter(w for s in sentences for w in s)
        n_tokens = sum(counts.values())
        if n_tokens < self.min_corpus_tokens:
            raise ValueError(
                f"corpus has {n_tokens} tokens; at least {self.min_corpus_tokens} are required"
            )
        words = sorted((w for w, c in counts.items() if c >= self.min_count),
                       key=lambda w: (-counts[w], w))
        if len(words) < 2:
            raise ValueError("vocabulary too small after min_count filtering")
        self.index_to_word_ = words
        self.vocabulary_ = {w: i for i, w in enumerate(words)}
        self.counts_ = np.array([counts[w] for w in words], dtype=np.int64)

    def _pairs(self, sentences):
        centers, contexts = [], []
        vocab = self.vocabulary_
        for sent in sentences:
            ids = np.array([vocab[w] for w in sent if w in vocab], dtype=np.int64)
            n = len(ids)
            for off in range(1, self.window + 1):
                if off >= n:
                    break
                centers += [ids[:-off], ids[off:]]
                contexts += [ids[off:], ids[:-off]]
        if not centers:
            raise ValueError("no training pairs; sentences are too short")
        return np.concatenate(centers), np.concatenate(contexts)

    def fit(self, sentences: Iterable[Sequence[str]], y=None):
        if self.dim < 8:
            raise ValueError("dim must be at least 8")
        sentences = [list(s) for s in sentences]
        self._build_vocab(sentences)
        rng = np.random.default_rng(self.seed)
        V, d = len(self.index_to_word_), self.dim
        w_in = (rng.random((V, d)) - 0.5) / d
        w_out = np.zeros((V, d))
        noise = self.counts_ ** 0.75
        noise_cdf = np.cumsum(noise / noise.sum())
        centers, contexts = self._pairs(sentences)
        n_pairs = len(centers)
        total_steps = self.epochs * int(np.ceil(n_pairs / self.batch_size))
        step = 0
        self.loss_history_ = []
        for _ in range(self.epochs):
            order = rng.permutation(n_pairs)
            epoch_loss, epoch_n = 0.0, 0
            for a in range(0, n_pairs, self.batch_size):
                idx = order[a:a + self.batch_size]
                c, o = centers[idx], contexts[idx]
                neg = np.searchsorted(noise_cdf, rng.random((len(idx), self.negatives)))
                np.minimum(neg, V - 1, out=neg)
                lr = self.learning_rate * max(1e-4, 1.0 - step / total_steps)
                step += 1

                v = w_in[c]
                u_o = w_out[o]
                u_n = w_out[neg]
                s_pos = _sigmoid(np.einsum("bd,bd->b", v, u_o))
                s_neg = _sigmoid(np.einsum("bd,bkd->bk", v, u_n))
                epoch_loss -= np.log(np.maximum(s_pos, 1e-12)).sum()
                epoch_loss -= np.log(np.maximum(1.0 - s_neg, 1e-12)).sum()
                epoch_n += len(idx)

                g_pos = (s_pos - 1.0)[:, None]
                g_neg = s_neg[:, :, None]
                grad_v = g_pos * u_o + (g_neg * u_n).sum(axis=1)
                np.add.at(w_out, o, -lr * g_pos * v)
                np.add.at(w_out, neg.ravel(), (-lr * g_neg * v[:, None, :]).reshape(-1, d))
                np.add.at(w_in, c, -lr * grad_v)
            self.loss_history_.append(epoch_loss / epoch_n)
        self.vectors_ = w_in
        self._unit_cache = None
        return self

    @property
    def vector_size(self):
        return self.vectors_.shape[1]

    def __contains__(self, word):
        return word in self.vocabulary_

    def vector(self, word: str) -> np.ndarray:
        return self.vectors_[self.vocabulary_[word]]

    def nearest_neighbors(self, word: str, k: int = 10):
        """Top-``k`` words by cosine similarity, query excluded.

        Returns ``(neighbours, oov)``; ``neighbours`` is a list of
        ``(word, cosine)`` in descending cosine order with ties broken by
        vocabulary index. An unknown word gives ``([], True)``.
        """
        check_is_fitted(self, "vectors_")
        if k < 1:
            raise ValueError("k must be >= 1")
        q = self.vocabulary_.get(word)
        if q is None:
            return [], True
        unit = self._unit_vectors()
        sims = unit @ unit[q]
        idx = np.arange(len(sims))
        keep = idx != q
        order = np.lexsort((idx[keep], -sims[keep]))[:k]
        cand = idx[keep][order]
        return [(self.index_to_word_[i], float(sims[i])) for i in cand], False

    def _unit_vectors(self):
        if getattr(self, "_unit_cache", None) is None:
            norms = np.linalg.norm(self.vectors_, axis=1, keepdims=True)
            self._unit_cache = self.vectors_ / np.where(norms == 0, 1.0, norms)
        return self._unit_cache

    def save(self, path) -> None:
        """Binary layout: magic, header ints, length-prefixed words, float64 rows."""
        check_is_fitted(self, "vectors_")
        V, d = self.vectors_.shape
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<IIiiiiq", d, V, self.window, self.negatives,
                                 self.epochs, self.min_count, self.seed))
            for w in self.index_to_word_:
                raw = w.encode("utf-8")
                fh.write(struct.pack("<H", len(raw)))
                fh.write(raw)
            fh.write(np.ascontiguousarray(self.vectors_, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "SkipGramEmbeddings":
        data = Path(path).read_bytes()
        if not data.startswith(_MAGIC):
            raise ValueError(f"{path}: not an embedding file")
        pos = len(_MAGIC)
        d, V, window, negatives, epochs, min_count, seed = struct.unpack_from("<IIiiiiq", data, pos)
        pos += struct.calcsize("<IIiiiiq")
        words = []
        for _ in range(V):
            (n,) = struct.unpack_from("<H", data, pos)
            pos += 2
            words.append(data[pos:pos + n].decode("utf-8"))
            pos += n
        vectors = np.frombuffer(data, dtype="<f8", count=V * d, offset=pos).reshape(V, d).copy()
        model = cls(dim=d, window=window, negatives=negatives, epochs=epochs,
                    min_count=min_count, seed=seed)
        model.index_to_word_ = words
        model.vocabulary_ = {w: i for i, w in enumerate(words)}
        model.vectors_ = vectors
        model._unit_cache = None
        return model

    def export_text(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(self.index_to_word_)} {self.vector_size}\n")
            for w, row in zip(self.index_to_word_, self.vectors_):
                fh.write(w + " " + " ".join(repr(float(x)) for x in row) + "\n")


def nearest_neighbors(model: SkipGramEmbeddings, word: str, k: int = 10):
    return model.nearest_neighbors(word, k)


def expand_variants(model: SkipGramEmbeddings, term_words: Iterable[str], k: int = 200) -> dict[str, set[str]]:
    """Map each term word to neighbours at edit distance exactly one.

    Words of three letters or fewer, and words unknown to the model, get an
    empty set.
    """
    lexicon = {}
    for word in sorted({w.lower() for w in term_words}):
        variants = set()
        if len(word) > 3:
            neighbours, _ = model.nearest_neighbors(word, k)
            variants = {n for n, _ in neighbours if levenshtein(word, n) == 1}
        lexicon[word] = variants
    return lexicon


def save_variants(lexicon: dict[str, set[str]], path, header: str | None = None) -> None:
    lines = [] if header is None else [header]
    lines += [f"{w}\t{','.join(sorted(v))}" for w, v in sorted(lexicon.items())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_variants(path) -> dict[str, set[str]]:
    lexicon = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        word, _, rest = line.partition("\t")
        lexicon[word] = {v for v in rest.split(",") if v}
    return lexicon
