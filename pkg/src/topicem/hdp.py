"""Streaming inference for the unbounded-topics (stick-breaking) model.

The document-level prior is Dirichlet(b * pi) over the instantiated topics,
where pi are stick-breaking weights (pi_k = pibar_k * prod_{t<k}(1 - pibar_t),
pibar ~ Beta(1, alpha_conc)) with sum(pi) < 1 strictly; the leftover stick
mass feeds the new-topic outcome of the collapsed sampler,

    p(z_n = k | ...) ∝ beta[k, x_n] * (N_-n,k + b*pi_k)      for k <= T
    p(z_n = new | ...) ∝ b * (1 - sum pi) / V.

Topic growth is local to a document's sweep; a minibatch merge appends the
newly born topics in document order.  The exchangeable statistics swap roles
relative to the finite family: s1 = E[log nu] is the (T,) vector driving the
b*pi fixed point, s2 the (T, V) expected word-topic counts driving beta.

A Bayesian variant keeps Dirichlet rows q(beta_k) = Dir(lambda_k) and Beta
sticks q(pibar_k) = Beta(a_k, c_k), updated from per-document Gibbs samples
with Antoniak-distributed table counts.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.special import digamma, polygamma

from .evaluation import PerplexityReport, left_to_right
from .lda import ModelParams
from .special import inverse_digamma
from .online_em import (
    AveragedTrace,
    CheckpointInfo,
    StepSchedule,
    doc_rng,
    step_size,
    stream_rng,
)

__all__ = [
    "HdpParams",
    "HdpSuffStats",
    "HdpEstepResult",
    "hdp_m_step",
    "hdp_gibbs_estep",
    "HdpGibbsEStep",
    "HdpFamily",
    "log_stirling_row",
    "sample_table_count",
    "HdpBayesState",
    "hdp_vargibbs_step",
    "run_hdp_vargibbs",
    "hdp_evaluate",
]

logger = logging.getLogger(__name__)

_PI_CLIP_EPS = 1e-6
_clip_warned = False
_SEED_VARGIBBS = 31


@dataclass
class HdpParams:
    """Instantiated point parameters of the unbounded model."""

    beta: np.ndarray       # (T, V) rows on the simplex
    pi: np.ndarray         # (T,) positive stick weights, sum < 1 strictly
    b: float               # document-level concentration (prior is Dir(b*pi))
    alpha_conc: float      # Beta(1, alpha_conc) stick prior

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        self.pi = np.asarray(self.pi, dtype=float)
        if self.beta.ndim != 2 or self.pi.shape != (self.beta.shape[0],):
            raise ValueError("beta must be (T, V) with one stick weight per row")
        if np.any(self.pi <= 0) or self.pi.sum() >= 1.0:
            raise ValueError("stick weights must be positive with sum < 1")
        row_err = np.max(np.abs(self.beta.sum(axis=1) - 1.0))
        if row_err > 1e-9 or np.any(self.beta < 0):
            raise ValueError("beta rows must lie on the simplex")
        if self.b <= 0 or self.alpha_conc <= 0:
            raise ValueError("concentrations must be positive")

    @property
    def n_topics(self) -> int:
        return self.beta.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.beta.shape[1]

    def copy(self) -> "HdpParams":
        return HdpParams(self.beta.copy(), self.pi.copy(), self.b, self.alpha_conc)


@dataclass
class HdpSuffStats:
    """s1 = E[log nu] (T,), s2 = expected word-topic counts (T, V)."""

    s1: np.ndarray
    s2: np.ndarray

    def __post_init__(self):
        self.s1 = np.asarray(self.s1, dtype=float)
        self.s2 = np.asarray(self.s2, dtype=float)
        if self.s2.ndim != 2 or self.s1.shape != (self.s2.shape[0],):
            raise ValueError(f"inconsistent stat shapes {self.s1.shape} / {self.s2.shape}")

    @property
    def n_topics(self) -> int:
        return self.s2.shape[0]

    def resized(self, n_topics: int, s1_fill) -> "HdpSuffStats":
        """Pad to a grown topic count: new s2 rows zero, new s1 entries given."""
        t_old, v = self.s2.shape
        if n_topics < t_old:
            raise ValueError("cannot shrink the topic axis")
        if n_topics == t_old:
            return HdpSuffStats(self.s1.copy(), self.s2.copy())
        s1 = np.concatenate([self.s1, np.asarray(s1_fill, dtype=float)])
        if s1.shape != (n_topics,):
            raise ValueError("s1_fill has the wrong length")
        s2 = np.vstack([self.s2, np.zeros((n_topics - t_old, v))])
        return HdpSuffStats(s1, s2)


def _prior_log_nu(pi: np.ndarray, b: float, extra: float = 0.0) -> np.ndarray:
    """Prior expectation of log nu_k under Dir(b*pi) (+extra tokens in the total)."""
    return digamma(b * pi) - digamma(b * pi.sum() + extra)


def _bpi_fixed_point(s1, alpha0=None, tol: float = 1e-6, max_iter: int = 5000):
    """Digamma fixed point for b*pi with a precision-aware stopping rule.

    Same update as the finite-model alpha solve, but sticks for stale topics
    decay toward zero, where one ulp of the iterate already moves the digamma
    residual by ~eps * trigamma(x) * x (~eps/x for small x), so an absolute
    residual test can never pass.  Each component is accepted once its
    residual is within max(tol, that quantization floor).
    """
    s1 = np.asarray(s1, dtype=float)
    if not np.all(np.isfinite(s1)):
        raise ValueError("_bpi_fixed_point: non-finite s1")
    x = np.ones_like(s1) if alpha0 is None else np.asarray(alpha0, dtype=float).copy()
    if np.any(x <= 0):
        raise ValueError("_bpi_fixed_point: alpha0 must be positive")
    eps = np.finfo(float).eps
    for _ in range(max_iter):
        resid = np.abs(digamma(x) - digamma(x.sum()) - s1)
        floor = 4.0 * eps * polygamma(1, x) * x
        if np.all(resid <= np.maximum(tol, floor)):
            return x
        x = inverse_digamma(digamma(x.sum()) + s1)
        if not np.all(np.isfinite(x)) or np.any(x <= 0):
            raise RuntimeError("_bpi_fixed_point: iterate left the domain")
    raise RuntimeError(
        f"_bpi_fixed_point did not converge in {max_iter} iterations "
        f"(residual {np.max(resid):.3e})"
    )


def hdp_m_step(
    stats: HdpSuffStats,
    b: float,
    alpha_conc: float,
    bpi0=None,
    beta_floor: float = 0.0,
    fp_tol: float = 1e-6,
    fp_max_iter: int = 5000,
) -> HdpParams:
    """Closed-form beta rows plus the digamma fixed point for b*pi.

    If the fixed point leaves sum(pi) >= 1, pi is rescaled to 1 - 1e-6 and the
    event logged.
    """
    s2 = np.asarray(stats.s2, dtype=float)
    if np.any(s2 < 0):
        raise ValueError("hdp_m_step: s2 must be nonnegative")
    row_sums = s2.sum(axis=1)
    dead = row_sums <= 0.0
    if np.any(dead):
        warnings.warn(
            f"hdp_m_step: {int(dead.sum())} topic(s) received no mass; resetting to uniform",
            RuntimeWarning,
        )
    v = s2.shape[1]
    beta = np.where(dead[:, None], 1.0 / v, s2 / np.where(dead, 1.0, row_sums)[:, None])
    if beta_floor > 0.0:
        beta = np.maximum(beta, beta_floor)
        beta = beta / beta.sum(axis=1, keepdims=True)

    bpi = _bpi_fixed_point(stats.s1, alpha0=bpi0, tol=fp_tol, max_iter=fp_max_iter)
    pi = bpi / b
    total = pi.sum()
    if total >= 1.0:
        scale = (1.0 - _PI_CLIP_EPS) / total
        # Routine at equilibrium (the fixed point saturates the stick), so only
        # the first event per process is surfaced at WARNING.
        global _clip_warned
        level = logging.DEBUG if _clip_warned else logging.WARNING
        _clip_warned = True
        logger.log(level, "hdp_m_step: sum(pi) = %.6f >= 1, rescaling by %.6f", total, scale)
        pi = pi * scale
    return HdpParams(beta, pi, b, alpha_conc)


@dataclass
class HdpEstepResult:
    """Per-document local-step output, sized to the document's grown T."""

    stats: HdpSuffStats
    marginals: np.ndarray          # (N, T_local); columns sum to <= 1 when growing
    new_topics: list               # [(pi_value, beta_row), ...] in birth order
    doc_len: int


def hdp_gibbs_estep(
    doc,
    params: HdpParams,
    n_sweeps: int,
    rng,
    allow_growth: bool = True,
    t_max: int = 200,
) -> HdpEstepResult:
    """Collapsed sweeps with a new-topic outcome; trailing-window estimates.

    The conditional is taken over the T instantiated topics plus one "new
    topic" outcome whose weight is b(1 - sum pi)/V; drawing it instantiates a
    fresh topic (stick sample Beta(1, alpha_conc) on the leftover mass,
    uniform word row).  Marginals are Rao-Blackwellized over the trailing
    window against the T+1-outcome normalizer; s1 uses the windowed count
    vectors with the final (post-growth) sticks.
    """
    if n_sweeps < 4:
        raise ValueError("need at least 4 sweeps for the trailing window")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    word_ids = np.asarray(getattr(doc, "word_ids", doc), dtype=np.int64)
    n = word_ids.size
    if n == 0:
        raise ValueError("empty document")

    beta = params.beta
    pi = params.pi.copy()
    b = params.b
    v = params.vocab_size
    t_cur = params.n_topics
    new_topics = []

    beta_cols = beta[:, word_ids]  # (T, N), rebuilt on growth
    col_mass = beta_cols.sum(axis=0)
    if np.any(col_mass <= 0) and not allow_growth:
        raise ValueError("a token has zero probability under every topic")

    # init over instantiated topics only
    cum0 = np.cumsum(beta_cols / np.where(col_mass > 0, col_mass, 1.0)[None, :], axis=0)
    z = np.minimum((cum0 < rng.random(n)[None, :]).sum(axis=0), t_cur - 1)
    counts = np.bincount(z, minlength=t_cur).astype(float)

    start = int(np.ceil(3 * n_sweeps / 4))
    window_margs = []
    window_counts = []

    for t in range(1, n_sweeps + 1):
        perm = rng.permutation(n)
        for j in perm:
            counts[z[j]] -= 1.0
            residual = 1.0 - pi.sum()
            grow_ok = allow_growth and t_cur < t_max
            w_new = b * residual / v if grow_ok else 0.0
            wgt = beta_cols[:, j] * (counts + b * pi)
            c = np.cumsum(wgt)
            total = c[-1] + w_new
            if not (total > 0):
                raise ValueError("conditional has zero mass everywhere")
            thr = rng.random() * total
            k = int(np.searchsorted(c, thr, side="right"))
            if k >= t_cur:  # new topic
                pibar = rng.beta(1.0, params.alpha_conc)
                pi_new = pibar * residual
                row = np.full(v, 1.0 / v)
                pi = np.append(pi, pi_new)
                beta = np.vstack([beta, row])
                beta_cols = np.vstack([beta_cols, np.full(n, 1.0 / v)])
                counts = np.append(counts, 0.0)
                new_topics.append((float(pi_new), row))
                k = t_cur
                t_cur += 1
            z[j] = k
            counts[k] += 1.0
        if t >= start:
            cm = counts[None, :] - np.eye(t_cur)[z]
            wgt = beta_cols.T * (cm + b * pi[None, :])
            residual = 1.0 - pi.sum()
            w_new = b * residual / v if (allow_growth and t_cur < t_max) else 0.0
            tot = wgt.sum(axis=1) + w_new
            window_margs.append(wgt / tot[:, None])
            window_counts.append(counts.copy())

    w_len = len(window_margs)
    marg = np.zeros((n, t_cur))
    cnts = np.zeros((w_len, t_cur))
    for i, (m, c) in enumerate(zip(window_margs, window_counts)):
        marg[:, : m.shape[1]] += m
        cnts[i, : c.shape[0]] = c
    marg /= w_len

    bpi = b * pi
    s1 = digamma(bpi[None, :] + cnts).mean(axis=0) - digamma(bpi.sum() + n)
    s2 = np.zeros((t_cur, v))
    np.add.at(s2.T, word_ids, marg)
    return HdpEstepResult(HdpSuffStats(s1, s2), marg, new_topics, n)


class HdpGibbsEStep:
    """Per-document growing sampler as a minibatch backend (no boost)."""

    def __init__(self, t_max: int = 200):
        self.t_max = t_max
        self._cap_warned = False

    def run_minibatch(self, docs, params: HdpParams, n_sweeps, rngs):
        if params.n_topics >= self.t_max and not self._cap_warned:
            warnings.warn(f"topic growth capped at {self.t_max}", RuntimeWarning)
            self._cap_warned = True
        return [
            hdp_gibbs_estep(doc, params, n_sweeps, rng, allow_growth=True, t_max=self.t_max)
            for doc, rng in zip(docs, rngs)
        ]

    def begin_minibatch(self, docs, params, n_sweeps, rngs):
        raise NotImplementedError("boost is not defined for the growing sampler")


class HdpFamily:
    """Family handle: merges per-document growth and runs the HDP M-step."""

    def __init__(
        self,
        params: HdpParams,
        t_max: int = 200,
        beta_floor: float = 1e-10,
        fp_tol: float = 1e-6,
        fp_max_iter: int = 5000,
    ):
        self.params = params
        self.t_max = t_max
        self.beta_floor = beta_floor
        self.fp_tol = fp_tol
        self.fp_max_iter = fp_max_iter
        self._merged = params

    def init_stats(self, params: HdpParams) -> HdpSuffStats:
        # prior expectations for s1 keep the fixed point in its domain even
        # before the first blend; rho_1 = 1 overwrites them anyway.
        return HdpSuffStats(_prior_log_nu(params.pi, params.b), np.zeros(params.beta.shape))

    def combine(self, results, params: HdpParams):
        """Append per-document new topics in document order; pad and average."""
        t_base = params.n_topics
        pi = list(params.pi)
        beta_rows = [params.beta]
        slots = []  # per doc: (first_global_slot, n_new)
        for res in results:
            slots.append((len(pi), len(res.new_topics)))
            for pi_val, row in res.new_topics:
                pi.append(pi_val)
                beta_rows.append(row[None, :])
        pi = np.asarray(pi, dtype=float)
        total = pi.sum()
        if total >= 1.0:
            scale = (1.0 - _PI_CLIP_EPS) / total
            global _clip_warned
            level = logging.DEBUG if _clip_warned else logging.WARNING
            _clip_warned = True
            logger.log(level, "merge: sum(pi) = %.6f >= 1, rescaling by %.6f", total, scale)
            pi = pi * scale
        merged = HdpParams(np.vstack(beta_rows), pi, params.b, params.alpha_conc)

        t_new = merged.n_topics
        s1 = np.zeros(t_new)
        s2 = np.zeros((t_new, merged.vocab_size))
        for res, (first, n_new) in zip(results, slots):
            t_loc = res.stats.n_topics
            own = np.concatenate([np.arange(t_base), np.arange(first, first + n_new)])
            assert own.size == t_loc
            # topics this document never saw: prior expectation at its length
            s1_doc = _prior_log_nu(merged.pi, merged.b, extra=res.doc_len)
            s1_doc[own] = res.stats.s1
            s1 += s1_doc
            s2[own] += res.stats.s2
        k = len(results)
        s_hat = HdpSuffStats(s1 / k, s2 / k)
        self._merged = merged
        return s_hat, merged

    def blend(self, s: HdpSuffStats, s_hat: HdpSuffStats, rho: float) -> HdpSuffStats:
        if s_hat.n_topics > s.n_topics:
            # the old blend never saw the new topics; fill with the prior
            # expectation under the merged sticks so the fixed point stays
            # in its domain
            fill = _prior_log_nu(self._merged.pi, self._merged.b)[s.n_topics:]
            s = s.resized(s_hat.n_topics, fill)
        return HdpSuffStats(
            (1.0 - rho) * s.s1 + rho * s_hat.s1,
            (1.0 - rho) * s.s2 + rho * s_hat.s2,
        )

    def m_step(self, s: HdpSuffStats, params: HdpParams) -> HdpParams:
        return hdp_m_step(
            s,
            params.b,
            params.alpha_conc,
            bpi0=params.b * params.pi,
            beta_floor=self.beta_floor,
            fp_tol=self.fp_tol,
            fp_max_iter=self.fp_max_iter,
        )

    def params_mean(self, mean, params, count):
        return None  # iterate averaging is undefined under topic growth


# --- table counts (Antoniak) -------------------------------------------------

_STIRLING_ROWS = {0: np.array([0.0])}  # n -> log |S(n, m)| for m = 0..n (log 0 = -inf)


def log_stirling_row(n: int) -> np.ndarray:
    """log of unsigned Stirling numbers of the first kind |S(n, m)|, m=0..n."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n in _STIRLING_ROWS:
        return _STIRLING_ROWS[n]
    m = max(_STIRLING_ROWS)
    row = _STIRLING_ROWS[m]
    while m < n:
        # |S(m+1, j)| = m |S(m, j)| + |S(m, j-1)| in log space
        nxt = np.full(m + 2, -np.inf)
        if m > 0:
            nxt[: m + 1] = np.log(m) + row
        nxt[1:] = np.logaddexp(nxt[1:], row)
        m += 1
        _STIRLING_ROWS[m] = nxt
        row = nxt
    return _STIRLING_ROWS[n]


def sample_table_count(n: int, weight: float, rng) -> int:
    """Draw m ~ p(m) ∝ |S(n, m)| * weight^m for m in 0..n.

    This is the table-count distribution of a restaurant process with n
    customers and concentration ``weight``; n = 0 gives 0 and n = 1 gives 1.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if weight <= 0:
        raise ValueError("weight must be positive")
    if n == 0:
        return 0
    if n == 1:
        return 1
    log_p = log_stirling_row(n) + np.arange(n + 1) * np.log(weight)
    log_p[0] = -np.inf
    p = np.exp(log_p - log_p.max())
    p /= p.sum()
    return int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))


# --- Bayesian variant --------------------------------------------------------


@dataclass
class HdpBayesState:
    """Variational posterior: Dirichlet topic rows and Beta sticks."""

    lam: np.ndarray        # (T, V) positive
    a: np.ndarray          # (T,) Beta first parameters
    c: np.ndarray          # (T,) Beta second parameters
    b_conc: float          # document-level concentration
    alpha_conc: float      # stick prior concentration
    prior_eta: float       # symmetric prior on the topic rows
    corpus_size: int
    pi_bar: np.ndarray = None  # current stick sample used by the local step

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        self.a = np.asarray(self.a, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        if self.pi_bar is None:
            self.pi_bar = self.a / (self.a + self.c)
        if np.any(self.lam <= 0) or np.any(self.a <= 0) or np.any(self.c <= 0):
            raise ValueError("variational parameters must be positive")

    @property
    def n_topics(self) -> int:
        return self.lam.shape[0]

    def sticks_to_pi(self, pi_bar=None) -> np.ndarray:
        pb = self.pi_bar if pi_bar is None else pi_bar
        pb = np.clip(pb, 1e-12, 1.0 - 1e-12)
        return pb * np.concatenate([[1.0], np.cumprod(1.0 - pb[:-1])])

    def point_params(self) -> HdpParams:
        """Posterior-mean snapshot for evaluation."""
        beta = self.lam / self.lam.sum(axis=1, keepdims=True)
        pi = self.sticks_to_pi(self.a / (self.a + self.c))
        return HdpParams(beta, pi, self.b_conc, self.alpha_conc)


def _vargibbs_document(doc, state: HdpBayesState, pi: np.ndarray, n_sweeps: int, rng):
    """Sample assignments for one document against the collapsed surrogate.

    Returns (word-topic counts over the doc's unique words, unique word ids,
    per-topic table counts).
    """
    word_ids = np.asarray(getattr(doc, "word_ids", doc), dtype=np.int64)
    n = word_ids.size
    t = state.n_topics
    uniq, inv = np.unique(word_ids, return_inverse=True)
    lam_cols = state.lam[:, uniq]                      # (T, U)
    lam_sum = state.lam.sum(axis=1)                    # (T,)
    bpi = state.b_conc * pi

    like = lam_cols / lam_sum[:, None]
    cum0 = np.cumsum(like / like.sum(axis=0)[None, :], axis=0)
    z = np.minimum((cum0[:, inv] < rng.random(n)[None, :]).sum(axis=0), t - 1)
    nk = np.bincount(z, minlength=t).astype(float)     # doc topic counts
    nkw = np.zeros((t, uniq.size))                     # doc word-topic counts
    np.add.at(nkw.T, inv, np.eye(t)[z])

    for _ in range(n_sweeps):
        for j in rng.permutation(n):
            u = inv[j]
            kj = z[j]
            nk[kj] -= 1.0
            nkw[kj, u] -= 1.0
            wgt = (nk + bpi) * (nkw[:, u] + lam_cols[:, u]) / (nk + lam_sum)
            c = np.cumsum(wgt)
            if not (c[-1] > 0):
                raise ValueError("conditional has zero mass everywhere")
            k = min(int(np.searchsorted(c, rng.random() * c[-1], side="right")), t - 1)
            z[j] = k
            nk[k] += 1.0
            nkw[k, u] += 1.0

    tables = np.array(
        [sample_table_count(int(nk[k]), max(bpi[k], 1e-12), rng) for k in range(t)],
        dtype=float,
    )
    return nkw, uniq, tables


def hdp_vargibbs_step(doc, state: HdpBayesState, rho_t: float, rng, n_sweeps: int = 20) -> HdpBayesState:
    """Single-document stochastic update of (lambda, a, c) plus a stick draw."""
    new_state, _ = _vargibbs_minibatch([doc], state, rho_t, [rng], rng, n_sweeps)
    return new_state


def _vargibbs_minibatch(docs, state: HdpBayesState, rho_t, doc_rngs, stick_rng, n_sweeps):
    t = state.n_topics
    v = state.lam.shape[1]
    d = state.corpus_size
    pi = state.sticks_to_pi()

    counts_sum = np.zeros((t, v))
    tables_sum = np.zeros(t)
    tails_sum = np.zeros(t)
    for doc, rng in zip(docs, doc_rngs):
        nkw, uniq, tables = _vargibbs_document(doc, state, pi, n_sweeps, rng)
        counts_sum[:, uniq] += nkw
        tables_sum += tables
        tails_sum += np.concatenate([np.cumsum(tables[::-1])[::-1][1:], [0.0]])
    m = len(docs)

    lam_hat = state.prior_eta + d * counts_sum / m
    a_hat = 1.0 + d * tables_sum / m
    c_hat = state.alpha_conc + d * tails_sum / m
    lam = (1.0 - rho_t) * state.lam + rho_t * lam_hat
    a = (1.0 - rho_t) * state.a + rho_t * a_hat
    c = (1.0 - rho_t) * state.c + rho_t * c_hat

    # stick sample from the minibatch-conditioned Beta (exponent + 1 = parameter)
    a_post = a + tables_sum
    c_post = np.maximum(c - state.alpha_conc + tails_sum + 1.0, 1e-8)
    pi_bar = stick_rng.beta(a_post, c_post)

    new_state = HdpBayesState(
        lam, a, c, state.b_conc, state.alpha_conc, state.prior_eta, d, pi_bar=pi_bar
    )
    return new_state, m


def run_hdp_vargibbs(
    corpus_stream: Iterable,
    state: HdpBayesState,
    schedule: StepSchedule,
    minibatch_size: int,
    local_iters: int,
    base_seed: int = 0,
    callback=None,
    start_minibatch: int = 0,
    start_doc_index: int = 0,
) -> AveragedTrace:
    """Stream the Bayesian variant; the trace carries point snapshots."""
    doc_index = start_doc_index
    docs_seen = start_doc_index
    count = 0
    params = state.point_params()
    batch = []

    def flush(batch, i):
        nonlocal state, params, docs_seen, count
        rho = step_size(schedule, i)
        rngs = [doc_rng(base_seed, doc_index - len(batch) + j) for j in range(len(batch))]
        stick_rng = stream_rng(base_seed, _SEED_VARGIBBS, i)
        state, m = _vargibbs_minibatch(batch, state, rho, rngs, stick_rng, local_iters)
        docs_seen += m
        count += 1
        params = state.point_params()
        if callback is not None:
            callback(CheckpointInfo(i, docs_seen, params, None))

    i = start_minibatch
    for doc in corpus_stream:
        batch.append(doc)
        doc_index += 1
        if len(batch) == minibatch_size:
            i += 1
            flush(batch, i)
            batch = []
    if batch:
        i += 1
        flush(batch, i)
    trace = AveragedTrace(last=params, running_mean=None, count=count)
    trace.state = state
    trace.next_minibatch = i
    trace.next_doc_index = doc_index
    return trace


def hdp_evaluate(test_corpus, params: HdpParams, n_particles: int = 30, seed: int = 0) -> PerplexityReport:
    """Held-out evaluation of the instantiated topics as a finite model.

    Truncates to the T instantiated topics and renormalizes the document
    prior to alpha = b * pi / sum(pi), then scores with the left-to-right
    estimator.  For T = 1 this is the exact unigram likelihood.
    """
    alpha = params.b * params.pi / params.pi.sum()
    lda_params = ModelParams(params.beta, alpha)
    docs = getattr(test_corpus, "documents", test_corpus)
    if len(docs) == 0:
        raise ValueError("empty test corpus")
    lls = np.empty(len(docs))
    for i, doc in enumerate(docs):
        lls[i] = left_to_right(doc, lda_params, n_particles, stream_rng(seed, 4))
    return PerplexityReport(np.arange(len(docs)), lls, n_particles, seed)
