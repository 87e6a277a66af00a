import numpy as np
import pytest

from topicem.corpus import Document
from topicem.lda import ModelParams


def random_params(rng, n_topics, vocab_size, alpha_scale=2.0):
    """Random valid ModelParams: Dirichlet(1) topic rows, uniform-ish alpha."""
    beta = rng.dirichlet(np.ones(vocab_size), size=n_topics)
    alpha = rng.uniform(0.2, alpha_scale, size=n_topics)
    return ModelParams(beta, alpha)


def random_doc(rng, vocab_size, n_tokens):
    return Document(rng.integers(0, vocab_size, size=n_tokens))


@pytest.fixture
def rng():
    return np.random.default_rng(0)
