"""Collapsed Gibbs local step and the exact-enumeration oracle.

The local conditional for token n given all other assignments is

    p(z_n = k | z_-n, X) ∝ beta[k, x_n] * (N_-n,k + alpha_k) / (N_X - 1 + sum alpha)

Per-document estimates are Rao-Blackwellized: the conditionals are recomputed
for every token at the end of each sweep in the averaging window (the last
quarter of the sweeps) and averaged; the log-proportion statistic uses the
digamma moments of the windowed count vectors.

For throughput the sampler is implemented as a minibatch kernel that advances
all documents position-synchronously (each document still consumes its own
counter-seeded uniform stream, so results are independent of the grouping);
the per-document entry point is the same kernel with a single document.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln, logsumexp

from .online_em import SuffStats

__all__ = [
    "GibbsState",
    "GibbsResult",
    "EnumerationResult",
    "gibbs_conditional",
    "gibbs_estep",
    "enumerate_posterior",
    "window_start",
    "GibbsEStep",
]


def window_start(n_sweeps: int) -> int:
    """First sweep (1-indexed) of the trailing averaging window, ceil(3P/4)."""
    return int(np.ceil(3 * n_sweeps / 4))


@dataclass
class GibbsState:
    """Assignments and topic counts of one document mid-sampler."""

    z: np.ndarray
    counts: np.ndarray


def gibbs_conditional(state: GibbsState, n: int, doc, params) -> np.ndarray:
    """Normalized conditional over topics for token n given the rest."""
    word_ids = np.asarray(getattr(doc, "word_ids", doc), dtype=np.int64)
    if not (0 <= n < word_ids.size):
        raise ValueError(f"token index {n} out of range for length {word_ids.size}")
    alpha = params.alpha
    minus = state.counts.astype(float).copy()
    minus[state.z[n]] -= 1.0
    p = params.beta[:, word_ids[n]] * (minus + alpha) / (word_ids.size - 1 + alpha.sum())
    total = p.sum()
    if not (total > 0):
        raise ValueError("conditional has zero mass everywhere (dead word column?)")
    return p / total


@dataclass
class GibbsResult:
    stats: SuffStats
    marginals: np.ndarray


@dataclass
class _MinibatchResult:
    mean_stats: SuffStats
    n_docs: int


class _MinibatchGibbs:
    """Position-synchronous sampler state for a batch of documents.

    Documents are reordered by length (descending) so that at inner step j the
    active documents form a prefix; all per-document randomness is drawn from
    the document's own generator before any sweep runs, so the reordering and
    the batching never change results.
    """

    def __init__(self, docs, beta, alpha, n_sweeps, rngs):
        if len(docs) == 0:
            raise ValueError("empty minibatch")
        if len(rngs) != len(docs):
            raise ValueError("need one generator per document")
        lengths = np.array([len(getattr(d, "word_ids", d)) for d in docs], dtype=np.int64)
        if np.any(lengths == 0):
            raise ValueError("zero-length document in minibatch")
        order = np.argsort(-lengths, kind="stable")
        self.order = order
        self.lengths = lengths[order]
        self.n_docs = len(docs)
        self.n_sweeps = n_sweeps
        self.max_len = int(self.lengths[0])
        b, ml, p = self.n_docs, self.max_len, n_sweeps

        self.tokens = np.zeros((b, ml), dtype=np.int64)
        self.mask = np.zeros((b, ml), dtype=bool)
        u_init = np.zeros((b, ml))
        self.perms = np.zeros((b, p, ml), dtype=np.int64)
        self.u_site = np.zeros((b, p, ml))
        for row, i in enumerate(order):
            w = np.asarray(getattr(docs[i], "word_ids", docs[i]), dtype=np.int64)
            l = w.size
            self.tokens[row, :l] = w
            self.mask[row, :l] = True
            rng = rngs[i]
            u_init[row, :l] = rng.random(l)
            for t in range(p):
                self.perms[row, t, :l] = rng.permutation(l)
            self.u_site[row, :, :l] = rng.random((p, l))

        self.n_active = (self.lengths[:, None] > np.arange(ml)[None, :]).sum(axis=0)
        self.sweeps_done = 0

        col_mass = beta.sum(axis=0)
        used = self.tokens[self.mask]
        if np.any(col_mass[used] <= 0):
            raise ValueError("a token has zero probability under every topic")

        # init: z ~ Mult(column-normalized beta)
        k = beta.shape[0]
        beta_bar = beta / np.where(col_mass > 0, col_mass, 1.0)[None, :]
        cum = np.cumsum(beta_bar[:, self.tokens], axis=0)  # (K, B, ml)
        self.z = np.minimum((cum < u_init[None, :, :]).sum(axis=0), k - 1)
        self.z[~self.mask] = 0
        self.counts = np.zeros((b, k))
        flat_docs = np.repeat(np.arange(b), self.lengths)
        np.add.at(self.counts, (flat_docs, self.z[self.mask]), 1.0)

    def sweep(self, beta, alpha):
        t = self.sweeps_done
        if t >= self.n_sweeps:
            raise RuntimeError("all scheduled sweeps already consumed")
        z, counts, tokens = self.z, self.counts, self.tokens
        k = beta.shape[0]
        for j in range(self.max_len):
            nj = self.n_active[j]
            rows = np.arange(nj)
            pos = self.perms[:nj, t, j]
            w = tokens[rows, pos]
            cur = z[rows, pos]
            counts[rows, cur] -= 1.0
            p = beta[:, w].T * (counts[:nj] + alpha)
            c = np.cumsum(p, axis=1)
            thr = self.u_site[:nj, t, j] * c[:, -1]
            new = np.minimum((c <= thr[:, None]).sum(axis=1), k - 1)
            z[rows, pos] = new
            counts[rows, new] += 1.0
        self.sweeps_done = t + 1

    def rb_marginals(self, beta, alpha):
        """Conditional probability vectors for every token at the current state."""
        k = beta.shape[0]
        cm = self.counts[:, None, :] - np.eye(k)[self.z]  # (B, ml, K)
        p = beta[:, self.tokens].transpose(1, 2, 0) * (cm + alpha[None, None, :])
        tot = p.sum(axis=2)
        bad = self.mask & ~(tot > 0)
        if np.any(bad):
            raise ValueError("conditional has zero mass everywhere (dead word column?)")
        p /= np.where(tot > 0, tot, 1.0)[:, :, None]
        p[~self.mask] = 0.0
        return p

    def s2_snapshot(self, alpha):
        return digamma(self.counts + alpha[None, :]) - digamma(alpha.sum() + self.lengths)[:, None]

    def unsort(self, arr):
        out = np.empty_like(arr)
        out[self.order] = arr
        return out


def _mean_stats_from(marg, kernel, s2_rows, vocab_size):
    """Average per-document stats: scatter marginals into (K, V), mean s2."""
    k = marg.shape[2]
    s1_vk = np.zeros((vocab_size, k))
    np.add.at(s1_vk, kernel.tokens[kernel.mask], marg[kernel.mask])
    s1 = s1_vk.T / kernel.n_docs
    return SuffStats(s1, s2_rows.mean(axis=0))


def _run_kernel(kernel, beta, alpha, n_sweeps, mode):
    """Advance all sweeps, returning (window marginals, per-doc s2 rows)."""
    if mode == "marginals":
        if n_sweeps < 4:
            raise ValueError("marginals mode needs at least 4 sweeps for the window")
        start = window_start(n_sweeps)
        marg_sum = None
        psi_sum = 0.0
        for t in range(1, n_sweeps + 1):
            kernel.sweep(beta, alpha)
            if t >= start:
                m = kernel.rb_marginals(beta, alpha)
                marg_sum = m if marg_sum is None else marg_sum + m
                psi_sum = psi_sum + digamma(kernel.counts + alpha[None, :])
        w = n_sweeps - start + 1
        marg = marg_sum / w
        s2 = psi_sum / w - digamma(alpha.sum() + kernel.lengths)[:, None]
        return marg, s2
    if mode == "last_sample":
        for _ in range(n_sweeps):
            kernel.sweep(beta, alpha)
        k = beta.shape[0]
        marg = np.eye(k)[kernel.z]
        marg[~kernel.mask] = 0.0
        return marg, kernel.s2_snapshot(alpha)
    raise ValueError(f"unknown mode {mode!r}")


def gibbs_estep(doc, params, n_sweeps: int, seed, mode: str = "marginals") -> GibbsResult:
    """Run the collapsed sampler on one document.

    Returns the per-document statistics (s1 scattered from the windowed
    Rao-Blackwellized marginals, s2 from the windowed digamma moments) and
    the (N, K) marginal estimates themselves.  ``seed`` may be an integer or
    a Generator; P must be >= 4 in "marginals" mode so the trailing-quarter
    window is nonempty.  mode="last_sample" keeps only the final sweep's
    assignments (one-hot marginals, single-sample s2).
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    kernel = _MinibatchGibbs([doc], params.beta, params.alpha, n_sweeps, [rng])
    marg, s2 = _run_kernel(kernel, params.beta, params.alpha, n_sweeps, mode)
    stats = _mean_stats_from(marg, kernel, s2, params.vocab_size)
    n = len(getattr(doc, "word_ids", doc))
    return GibbsResult(stats=stats, marginals=marg[0, :n, :])


class GibbsEStep:
    """Minibatch backend wrapping the sampler for the online-EM driver."""

    def __init__(self, mode: str = "marginals"):
        self.mode = mode

    def run_minibatch(self, docs, params, n_sweeps, rngs) -> _MinibatchResult:
        kernel = _MinibatchGibbs(docs, params.beta, params.alpha, n_sweeps, rngs)
        marg, s2 = _run_kernel(kernel, params.beta, params.alpha, n_sweeps, self.mode)
        return _MinibatchResult(_mean_stats_from(marg, kernel, s2, params.vocab_size), len(docs))

    # --- boosted path: one sweep at a time, snapshot between sweeps ---

    def begin_minibatch(self, docs, params, n_sweeps, rngs) -> _MinibatchGibbs:
        return _MinibatchGibbs(docs, params.beta, params.alpha, n_sweeps, rngs)

    def sweep_minibatch(self, kernel: _MinibatchGibbs, params) -> None:
        kernel.sweep(params.beta, params.alpha)

    def snapshot_minibatch(self, kernel: _MinibatchGibbs, params) -> _MinibatchResult:
        if self.mode == "last_sample":
            k = params.beta.shape[0]
            marg = np.eye(k)[kernel.z]
            marg[~kernel.mask] = 0.0
        else:
            marg = kernel.rb_marginals(params.beta, params.alpha)
        s2 = kernel.s2_snapshot(params.alpha)
        return _MinibatchResult(_mean_stats_from(marg, kernel, s2, params.vocab_size), kernel.n_docs)


@dataclass
class EnumerationResult:
    marginals: np.ndarray
    stats: SuffStats
    log_evidence: float


def enumerate_posterior(doc, params, max_states: int = 2 ** 20) -> EnumerationResult:
    """Exact posterior by brute force over all K^N assignments.

    Weights each assignment by its collapsed joint (Dirichlet-multinomial
    prior times the word likelihoods) and returns exact token marginals,
    exact expected sufficient statistics, and log p(X | beta, alpha).
    """
    word_ids = np.asarray(getattr(doc, "word_ids", doc), dtype=np.int64)
    n = word_ids.size
    k, v = params.beta.shape
    if n < 1:
        raise ValueError("cannot enumerate an empty document")
    n_states = k ** n
    if n_states > max_states:
        raise ValueError(f"{k}^{n} assignments exceed the enumeration cap {max_states}")

    assign = np.stack(np.unravel_index(np.arange(n_states), (k,) * n), axis=1).astype(np.int64)
    with np.errstate(divide="ignore"):
        log_beta = np.log(params.beta)
    loglik = log_beta[assign, word_ids[None, :]].sum(axis=1)
    counts = np.stack([(assign == j).sum(axis=1) for j in range(k)], axis=1)
    alpha = params.alpha
    log_prior = (
        gammaln(alpha.sum())
        - gammaln(alpha.sum() + n)
        + gammaln(alpha[None, :] + counts).sum(axis=1)
        - gammaln(alpha).sum()
    )
    lw = loglik + log_prior
    log_evidence = float(logsumexp(lw))
    w = np.exp(lw - log_evidence)

    marginals = np.stack([w @ (assign == j) for j in range(k)], axis=1)  # (N, K)
    s1 = np.zeros((k, v))
    np.add.at(s1.T, word_ids, marginals)
    s2 = w @ digamma(alpha[None, :] + counts) - digamma(alpha.sum() + n)
    return EnumerationResult(marginals=marginals, stats=SuffStats(s1, s2), log_evidence=log_evidence)
