"""Input coercion shared by the estimator facades."""

from __future__ import annotations

import numbers

import numpy as np

from .corpus import Document

__all__ = ["as_documents", "check_positive", "resolve_seed"]


def as_documents(X, vocab_size=None):
    """Coerce ``X`` to a list of :class:`Document` plus a vocabulary size.

    Accepts a :class:`~topicem.corpus.Corpus`, a sequence of documents /
    integer arrays of word ids, or a 2-d count matrix (dense or scipy sparse)
    whose rows are expanded into sorted token lists.
    """
    if hasattr(X, "documents") and hasattr(X, "vocabulary"):
        return list(X.documents), X.vocab_size

    if hasattr(X, "tocoo"):  # scipy sparse, without importing scipy.sparse
        X = np.asarray(X.todense())
    if isinstance(X, np.ndarray) and X.ndim == 2:
        if np.any(X < 0) or not np.allclose(X, np.round(X)):
            raise ValueError("count matrices must hold nonnegative integers")
        counts = np.asarray(np.round(X), dtype=np.int64)
        docs = []
        for row in counts:
            ids = np.repeat(np.arange(row.size), row)
            if ids.size == 0:
                raise ValueError("count matrix contains an empty document")
            docs.append(Document(ids))
        inferred = counts.shape[1]
    else:
        docs = []
        for item in X:
            docs.append(item if isinstance(item, Document)
                        else Document(np.asarray(item, dtype=np.int64)))
        if not docs:
            raise ValueError("no documents given")
        inferred = int(max(int(d.word_ids.max()) for d in docs)) + 1

    if vocab_size is None:
        vocab_size = inferred
    for d in docs:
        if d.word_ids.size and d.word_ids.max() >= vocab_size:
            raise ValueError(
                f"word id {int(d.word_ids.max())} out of range for vocab_size={vocab_size}"
            )
    return docs, int(vocab_size)


def check_positive(name: str, value, strict: bool = True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite number, got {value!r}")
    if (value <= 0) if strict else (value < 0):
        raise ValueError(f"{name} must be {'positive' if strict else 'nonnegative'}, got {value}")
    return float(value)


def resolve_seed(random_state) -> int:
    """Map sklearn-style ``random_state`` to the integer seed counters use."""
    if random_state is None:
        return 0
    if isinstance(random_state, numbers.Integral):
        return int(random_state)
    raise ValueError("random_state must be an int or None (generators are derived internally)")
