"""Mean-field local step (per-document zeta/gamma coordinate ascent).

One sweep updates every token's topic responsibilities in log space,

    zeta_nk ∝ beta[k, x_n] * exp(digamma(gamma_k)),

then refreshes the Dirichlet parameter gamma = alpha + sum_n zeta_n.  The
sweep order (zeta first, against the previous gamma) makes each full sweep a
coordinate-ascent step, so the per-document ELBO is non-decreasing across
sweeps.  gamma is initialized at alpha + N/K.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln

from .online_em import SuffStats

__all__ = [
    "VariationalState",
    "VariationalResult",
    "update_zeta",
    "update_gamma",
    "variational_estep",
    "elbo_document",
    "VariationalEStep",
]


@dataclass
class VariationalState:
    zeta: np.ndarray   # (N, K) rows on the simplex
    gamma: np.ndarray  # (K,) positive


def _softmax_rows(log_p, mask=None):
    m = log_p.max(axis=-1, keepdims=True)
    if np.any(~np.isfinite(m)):
        raise ValueError("token with zero mass under every topic")
    p = np.exp(log_p - m)
    p /= p.sum(axis=-1, keepdims=True)
    if mask is not None:
        p[~mask] = 0.0
    return p


def update_zeta(state: VariationalState, doc, params) -> VariationalState:
    """Token responsibilities given the current gamma (log-space softmax)."""
    word_ids = np.asarray(getattr(doc, "word_ids", doc), dtype=np.int64)
    with np.errstate(divide="ignore"):
        log_beta = np.log(params.beta)
    log_p = log_beta[:, word_ids].T + digamma(state.gamma)[None, :]
    return VariationalState(_softmax_rows(log_p), state.gamma)


def update_gamma(state: VariationalState, doc, alpha) -> VariationalState:
    """gamma = alpha + sum_n zeta_n (exact, no damping)."""
    zeta = state.zeta if state.zeta.size else np.zeros((0, alpha.shape[0]))
    return VariationalState(state.zeta, np.asarray(alpha, float) + zeta.sum(axis=0))


@dataclass
class VariationalResult:
    stats: SuffStats
    state: VariationalState


def _stats_from_state(word_ids, zeta, gamma, vocab_size):
    k = gamma.shape[0]
    s1 = np.zeros((k, vocab_size))
    np.add.at(s1.T, word_ids, zeta)
    s2 = digamma(gamma) - digamma(gamma.sum())
    return SuffStats(s1, s2)


def variational_estep(doc, params, n_sweeps: int) -> VariationalResult:
    """Run n_sweeps >= 1 full (zeta, gamma) sweeps and map to statistics."""
    if n_sweeps < 1:
        raise ValueError("n_sweeps must be >= 1")
    word_ids = np.asarray(getattr(doc, "word_ids", doc), dtype=np.int64)
    k = params.n_topics
    gamma0 = params.alpha + word_ids.size / k
    state = VariationalState(np.zeros((word_ids.size, k)), gamma0)
    for _ in range(n_sweeps):
        state = update_zeta(state, doc, params)
        state = update_gamma(state, doc, params.alpha)
    if not np.all(np.isfinite(state.gamma)):
        raise FloatingPointError("non-finite variational state")
    return VariationalResult(
        stats=_stats_from_state(word_ids, state.zeta, state.gamma, params.vocab_size),
        state=state,
    )


def elbo_document(doc, state: VariationalState, params) -> float:
    """Exact per-document evidence lower bound at (zeta, gamma).

    For K=1 this collapses to sum_n log beta[0, x_n].
    """
    word_ids = np.asarray(getattr(doc, "word_ids", doc), dtype=np.int64)
    zeta, gamma = state.zeta, state.gamma
    alpha = params.alpha
    with np.errstate(divide="ignore"):
        log_beta = np.log(params.beta)
        log_zeta = np.log(zeta)
    eq_log_theta = digamma(gamma) - digamma(gamma.sum())

    words = np.sum(zeta * np.where(zeta > 0, log_beta[:, word_ids].T, 0.0))
    topics = float(zeta.sum(axis=0) @ eq_log_theta)
    prior = gammaln(alpha.sum()) - gammaln(alpha).sum() + float((alpha - 1.0) @ eq_log_theta)
    q_theta = gammaln(gamma.sum()) - gammaln(gamma).sum() + float((gamma - 1.0) @ eq_log_theta)
    q_z = np.sum(zeta * np.where(zeta > 0, log_zeta, 0.0))
    elbo = words + topics + prior - q_theta - q_z
    if not np.isfinite(elbo):
        raise FloatingPointError("non-finite ELBO")
    return float(elbo)


@dataclass
class _MinibatchResult:
    mean_stats: SuffStats
    n_docs: int


class _MinibatchVar:
    """Vectorized (zeta, gamma) sweeps over a batch of documents."""

    def __init__(self, docs, alpha, vocab_size):
        lengths = np.array([len(getattr(d, "word_ids", d)) for d in docs], dtype=np.int64)
        if len(docs) == 0 or np.any(lengths == 0):
            raise ValueError("empty minibatch or zero-length document")
        b, ml, k = len(docs), int(lengths.max()), alpha.shape[0]
        self.vocab_size = vocab_size
        self.lengths = lengths
        self.tokens = np.zeros((b, ml), dtype=np.int64)
        self.mask = np.zeros((b, ml), dtype=bool)
        for i, d in enumerate(docs):
            w = np.asarray(getattr(d, "word_ids", d), dtype=np.int64)
            self.tokens[i, :w.size] = w
            self.mask[i, :w.size] = True
        self.gamma = np.broadcast_to(alpha, (b, k)) + (lengths / k)[:, None]
        self.zeta = np.zeros((b, ml, k))

    def sweep(self, log_beta, alpha):
        log_p = log_beta[:, self.tokens].transpose(1, 2, 0) + digamma(self.gamma)[:, None, :]
        self.zeta = _softmax_rows(log_p, self.mask)
        self.gamma = np.asarray(alpha, float)[None, :] + self.zeta.sum(axis=1)

    def mean_stats(self):
        k = self.gamma.shape[1]
        s1_vk = np.zeros((self.vocab_size, k))
        np.add.at(s1_vk, self.tokens[self.mask], self.zeta[self.mask])
        s1 = s1_vk.T / self.lengths.size
        s2 = (digamma(self.gamma) - digamma(self.gamma.sum(axis=1))[:, None]).mean(axis=0)
        return SuffStats(s1, s2)

    def elbos(self, log_beta, alpha):
        """Per-document ELBO vector at the current state."""
        eq = digamma(self.gamma) - digamma(self.gamma.sum(axis=1))[:, None]  # (B, K)
        lb = log_beta[:, self.tokens].transpose(1, 2, 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            lz = np.log(self.zeta)
        words = (self.zeta * np.where(self.zeta > 0, lb, 0.0)).sum(axis=(1, 2))
        topics = np.einsum("bk,bk->b", self.zeta.sum(axis=1), eq)
        alpha = np.asarray(alpha, float)
        prior = gammaln(alpha.sum()) - gammaln(alpha).sum() + (alpha - 1.0) @ eq.T
        q_theta = (
            gammaln(self.gamma.sum(axis=1))
            - gammaln(self.gamma).sum(axis=1)
            + np.einsum("bk,bk->b", self.gamma - 1.0, eq)
        )
        q_z = (self.zeta * np.where(self.zeta > 0, lz, 0.0)).sum(axis=(1, 2))
        return words + topics + prior - q_theta - q_z


class VariationalEStep:
    """Minibatch backend wrapping the mean-field sweeps for the driver."""

    def run_minibatch(self, docs, params, n_sweeps, rngs=None) -> _MinibatchResult:
        state = self.begin_minibatch(docs, params, n_sweeps, rngs)
        for _ in range(n_sweeps):
            self.sweep_minibatch(state, params)
        return self.snapshot_minibatch(state, params)

    def begin_minibatch(self, docs, params, n_sweeps, rngs=None) -> _MinibatchVar:
        return _MinibatchVar(docs, params.alpha, params.vocab_size)

    def sweep_minibatch(self, state: _MinibatchVar, params) -> None:
        with np.errstate(divide="ignore"):
            log_beta = np.log(params.beta)
        state.sweep(log_beta, params.alpha)

    def snapshot_minibatch(self, state: _MinibatchVar, params) -> _MinibatchResult:
        if not np.all(np.isfinite(state.gamma)):
            raise FloatingPointError("non-finite variational state")
        return _MinibatchResult(state.mean_stats(), state.lengths.size)
