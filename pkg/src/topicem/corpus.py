"""Corpus containers, the bag-of-words disk format, and synthetic data.

Documents are stored as flat arrays of integer word ids (one entry per token,
0-based).  Loaders and generators canonicalize token order to ascending word
id; the model is exchangeable so this only fixes a representation.

The on-disk format is the classic bag-of-words layout: a docword file with
three header lines (D, W, NNZ) followed by NNZ lines of ``docID wordID count``
(both ids 1-based), plus a vocabulary file with one token per line.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .lda import ModelParams

__all__ = [
    "Document",
    "Corpus",
    "SyntheticSpec",
    "load_uci_bag_of_words",
    "save_uci_bag_of_words",
    "filter_vocabulary",
    "split_corpus",
    "generate_synthetic",
]

_SEED_SPLIT = 11
_SEED_SYNTH = 12


@dataclass
class Document:
    """One document: a flat array of 0-based word ids, one per token."""

    word_ids: np.ndarray

    def __post_init__(self):
        self.word_ids = np.asarray(self.word_ids, dtype=np.int64)
        if self.word_ids.ndim != 1:
            raise ValueError("word_ids must be a 1-d array of token ids")
        if self.word_ids.size and self.word_ids.min() < 0:
            raise ValueError("negative word id")

    def __len__(self) -> int:
        return int(self.word_ids.size)


@dataclass
class Corpus:
    documents: list
    vocabulary: list

    def __post_init__(self):
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise ValueError("vocabulary entries must be unique")
        for d in self.documents:
            if len(d.word_ids) and d.word_ids.max() >= len(self.vocabulary):
                raise ValueError("document references a word id outside the vocabulary")

    @property
    def vocab_size(self) -> int:
        return len(self.vocabulary)

    @property
    def n_documents(self) -> int:
        return len(self.documents)

    @property
    def n_tokens(self) -> int:
        return int(sum(len(d) for d in self.documents))


def load_uci_bag_of_words(docword_path, vocab_path) -> Corpus:
    """Read the three-header bag-of-words format.

    Raises ValueError on malformed headers, out-of-range ids, nonpositive
    counts, or an NNZ/vocabulary-size mismatch.  Document ids that never
    appear are skipped with a warning; remaining documents keep ascending
    docID order and ascending word ids within each document.
    """
    with open(vocab_path) as fh:
        vocabulary = [line.rstrip("\n") for line in fh if line.strip() != ""]

    with open(docword_path) as fh:
        try:
            n_docs = int(fh.readline())
            n_words = int(fh.readline())
            nnz = int(fh.readline())
        except (ValueError, TypeError) as exc:
            raise ValueError(f"malformed bag-of-words header in {docword_path}") from exc
        if n_docs < 0 or n_words < 0 or nnz < 0:
            raise ValueError(f"malformed bag-of-words header in {docword_path}")
        if len(vocabulary) != n_words:
            raise ValueError(
                f"vocabulary file has {len(vocabulary)} tokens, header says {n_words}"
            )
        entries = np.loadtxt(fh, dtype=np.int64, ndmin=2)

    if entries.size == 0:
        entries = entries.reshape(0, 3)
    if entries.shape[0] != nnz or entries.shape[1] != 3:
        raise ValueError(f"expected {nnz} 'doc word count' lines, found {entries.shape[0]}")
    doc_ids, word_ids, counts = entries[:, 0], entries[:, 1], entries[:, 2]
    if nnz:
        if doc_ids.min() < 1 or doc_ids.max() > n_docs:
            raise ValueError("document id out of range")
        if word_ids.min() < 1 or word_ids.max() > n_words:
            raise ValueError("word id out of range")
        if counts.min() <= 0:
            raise ValueError("nonpositive count")

    documents = []
    missing = 0
    order = np.argsort(doc_ids, kind="stable")
    doc_ids, word_ids, counts = doc_ids[order], word_ids[order], counts[order]
    boundaries = np.searchsorted(doc_ids, np.arange(1, n_docs + 2))
    for d in range(n_docs):
        lo, hi = boundaries[d], boundaries[d + 1]
        if lo == hi:
            missing += 1
            continue
        w = np.repeat(word_ids[lo:hi] - 1, counts[lo:hi])
        documents.append(Document(np.sort(w)))
    if missing:
        warnings.warn(f"{missing} document id(s) in 1..{n_docs} had no entries; skipped")
    return Corpus(documents, vocabulary)


def save_uci_bag_of_words(corpus: Corpus, docword_path, vocab_path) -> None:
    """Write the corpus back to the three-header format (round-trip safe)."""
    lines = []
    for d, doc in enumerate(corpus.documents, start=1):
        words, counts = np.unique(doc.word_ids, return_counts=True)
        for w, c in zip(words, counts):
            lines.append(f"{d} {w + 1} {c}")
    with open(docword_path, "w") as fh:
        fh.write(f"{corpus.n_documents}\n{corpus.vocab_size}\n{len(lines)}\n")
        fh.write("\n".join(lines))
        if lines:
            fh.write("\n")
    with open(vocab_path, "w") as fh:
        for token in corpus.vocabulary:
            fh.write(token + "\n")


def filter_vocabulary(corpus: Corpus, stop_words: Sequence[str] = (), top_n: Optional[int] = None) -> Corpus:
    """Drop stop words, keep the top_n most frequent tokens, re-index.

    Frequency is the total token count; ties are broken lexicographically.
    Documents emptied by the filter are dropped.
    """
    freq = np.zeros(corpus.vocab_size, dtype=np.int64)
    for doc in corpus.documents:
        np.add.at(freq, doc.word_ids, 1)
    stop = set(stop_words)
    keep = [i for i, tok in enumerate(corpus.vocabulary) if tok not in stop and freq[i] > 0]
    if top_n is not None and len(keep) > top_n:
        keep.sort(key=lambda i: (-freq[i], corpus.vocabulary[i]))
        keep = keep[:top_n]
    keep.sort()  # preserve the original relative order so sorted docs stay sorted

    remap = np.full(corpus.vocab_size, -1, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    documents = []
    for doc in corpus.documents:
        new_ids = remap[doc.word_ids]
        new_ids = new_ids[new_ids >= 0]
        if new_ids.size:
            documents.append(Document(new_ids))
    return Corpus(documents, [corpus.vocabulary[i] for i in keep])


def split_corpus(corpus: Corpus, n_test: int, seed: int):
    """Seeded uniform train/test split; both halves keep corpus order."""
    if not (0 <= n_test < corpus.n_documents):
        raise ValueError(f"n_test must be in [0, {corpus.n_documents}), got {n_test}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _SEED_SPLIT]))
    test_idx = set(rng.choice(corpus.n_documents, size=n_test, replace=False).tolist())
    train = [d for i, d in enumerate(corpus.documents) if i not in test_idx]
    test = [d for i, d in enumerate(corpus.documents) if i in test_idx]
    return Corpus(train, corpus.vocabulary), Corpus(test, corpus.vocabulary)


@dataclass(frozen=True)
class SyntheticSpec:
    """Generator settings for synthetic mixed-membership corpora."""

    n_topics: int
    vocab_size: int
    n_documents: int
    mean_length: float
    alpha: object = None              # None -> symmetric 0.5
    topic_concentration: float = 0.1  # Dirichlet concentration for topic rows
    topics: object = None             # explicit (K, V) rows override

    def resolved_alpha(self) -> np.ndarray:
        if self.alpha is None:
            return np.full(self.n_topics, 0.5)
        a = np.asarray(self.alpha, dtype=float)
        if a.ndim == 0:
            return np.full(self.n_topics, float(a))
        if a.shape != (self.n_topics,):
            raise ValueError("alpha must be a scalar or a length-K vector")
        return a


def generate_synthetic(spec: SyntheticSpec, seed: int):
    """Sample a corpus from the generative process; returns (Corpus, ModelParams).

    Poisson document lengths, zero-length draws resampled; token order within
    each document canonicalized to ascending word id.
    """
    if spec.n_topics < 1 or spec.vocab_size < 2 or spec.n_documents < 1:
        raise ValueError("degenerate synthetic spec")
    if spec.mean_length <= 0:
        raise ValueError("mean_length must be positive")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _SEED_SYNTH]))
    alpha = spec.resolved_alpha()
    if np.any(alpha <= 0):
        raise ValueError("alpha_true must be positive")

    if spec.topics is not None:
        beta = np.asarray(spec.topics, dtype=float)
        if beta.shape != (spec.n_topics, spec.vocab_size):
            raise ValueError("explicit topics have the wrong shape")
    else:
        beta = rng.dirichlet(np.full(spec.vocab_size, spec.topic_concentration), size=spec.n_topics)
    params = ModelParams(beta, alpha)

    theta = rng.dirichlet(alpha, size=spec.n_documents)
    lengths = rng.poisson(spec.mean_length, size=spec.n_documents)
    while np.any(lengths == 0):
        zero = lengths == 0
        lengths[zero] = rng.poisson(spec.mean_length, size=int(zero.sum()))

    total = int(lengths.sum())
    doc_of_token = np.repeat(np.arange(spec.n_documents), lengths)
    cum_theta = np.cumsum(theta, axis=1)
    z = (cum_theta[doc_of_token] < rng.random(total)[:, None]).sum(axis=1)
    z = np.minimum(z, spec.n_topics - 1)
    cum_beta = np.cumsum(beta, axis=1)
    u = rng.random(total)
    words = np.empty(total, dtype=np.int64)
    for k in range(spec.n_topics):
        mask = z == k
        words[mask] = np.searchsorted(cum_beta[k], u[mask], side="right")
    words = np.minimum(words, spec.vocab_size - 1)

    offsets = np.concatenate([[0], np.cumsum(lengths)])
    documents = [
        Document(np.sort(words[offsets[d]:offsets[d + 1]]))
        for d in range(spec.n_documents)
    ]
    vocabulary = [f"w{i:05d}" for i in range(spec.vocab_size)]
    return Corpus(documents, vocabulary), params
