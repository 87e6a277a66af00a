"""Streaming Bayesian baselines over a variational topic posterior.

These methods keep a Gamma-style variational posterior q(beta_k) =
Dirichlet(lambda_k) over the topics instead of a point beta.  Each minibatch
runs the local step against the surrogate exp(E_q[log beta]), forms the
candidate lambda_hat = b + D * E[S1], and blends

    lambda <- (1 - rho_t) * lambda + rho_t * lambda_hat          (standard)
    lambda <- rho_t * lambda + (1 - rho_t) * lambda_hat          (reversed)

("reversed" reproduces a published variant that puts the step weight on the
old state).  Evaluation uses the posterior-mean topics beta_hat = E_q[beta],
i.e. lambda with normalized rows.

Variants
--------
olda      Bayesian + variational local step, free schedule, alpha by gradient
svb       olda with the incremental schedule rho_t = 1/t
vargibbs  Bayesian + collapsed-Gibbs local step on the surrogate, alpha frozen
splda     frequentist boosted variational core with rho_t = 1/t (delegated)
sgs       frequentist Gibbs core, last-sample stats, rho_t = 1/t, alpha frozen
          (delegated)
"""

from __future__ import annotations

from dataclasses import dataclass
from types import SimpleNamespace
from typing import Iterable, Optional

import numpy as np
from scipy.special import digamma

from .gibbs import GibbsEStep
from .lda import LdaFamily, ModelParams, alpha_gradient_ascent
from .online_em import (
    AveragedTrace,
    CheckpointInfo,
    StepSchedule,
    doc_rng,
    run_online_em,
    step_size,
)
from .variational import VariationalEStep, _MinibatchVar

__all__ = [
    "BayesGlobalState",
    "VariantRun",
    "expected_log_beta",
    "lambda_update",
    "run_variant",
    "elbo_corpus",
    "BAYES_VARIANTS",
]

BAYES_VARIANTS = ("olda", "svb", "splda", "sgs", "vargibbs")

_SEED_LAMBDA = 21


@dataclass
class BayesGlobalState:
    """Variational topic posterior: one Dirichlet row per topic."""

    lam: np.ndarray       # (K, V) positive
    prior_b: float        # symmetric Dirichlet prior on the topics
    corpus_size: int      # D, the stream length the minibatch is scaled to

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        if self.lam.ndim != 2 or np.any(self.lam <= 0) or not np.all(np.isfinite(self.lam)):
            raise ValueError("lambda must be a positive (K, V) matrix")
        if self.prior_b <= 0:
            raise ValueError("prior_b must be positive")

    @property
    def beta_hat(self) -> np.ndarray:
        """Posterior-mean topics E_q[beta]: row-normalized lambda."""
        return self.lam / self.lam.sum(axis=1, keepdims=True)


def expected_log_beta(state: BayesGlobalState) -> np.ndarray:
    """E_q[log beta_kv] = digamma(lambda_kv) - digamma(sum_v lambda_kv)."""
    return digamma(state.lam) - digamma(state.lam.sum(axis=1))[:, None]


def lambda_update(
    state: BayesGlobalState, s1_mean: np.ndarray, rho: float, blend: str = "standard"
) -> BayesGlobalState:
    """Blend lambda toward lambda_hat = b + D * E[S1]."""
    lam_hat = state.prior_b + state.corpus_size * s1_mean
    if blend == "standard":
        lam = (1.0 - rho) * state.lam + rho * lam_hat
    elif blend == "reversed":
        lam = rho * state.lam + (1.0 - rho) * lam_hat
    else:
        raise ValueError(f"unknown lambda blend {blend!r}")
    return BayesGlobalState(lam, state.prior_b, state.corpus_size)


@dataclass
class VariantRun:
    trace: AveragedTrace
    state: Optional[BayesGlobalState]


def _params_running_mean(mean: ModelParams, new: ModelParams, count: int) -> ModelParams:
    return ModelParams(
        mean.beta + (new.beta - mean.beta) / count,
        mean.alpha + (new.alpha - mean.alpha) / count,
    )


def _chunked(stream, size):
    batch = []
    for doc in stream:
        batch.append(doc)
        if len(batch) == size:
            yield batch
            batch = []
    if batch:
        yield batch


def run_variant(
    variant: str,
    corpus_stream: Iterable,
    init_params: ModelParams,
    schedule: StepSchedule,
    minibatch_size: int,
    local_iters: int,
    corpus_size: int,
    base_seed: int = 0,
    prior_b: float = 0.01,
    lambda_blend: str = "standard",
    alpha_value=None,
    gradient_lr: float = 1e-3,
    gradient_steps: int = 10,
    init_lambda: Optional[np.ndarray] = None,
    callback=None,
) -> VariantRun:
    """Run one streaming baseline for a single pass over the stream.

    The frequentist rebrandings (splda, sgs) delegate to the online-EM core
    with the matching configuration; the Bayesian ones (olda, svb, vargibbs)
    maintain a BayesGlobalState and report beta_hat = E_q[beta] point
    parameters in the trace.
    """
    if variant not in BAYES_VARIANTS:
        raise ValueError(f"unknown variant {variant!r} (expected one of {BAYES_VARIANTS})")
    if variant in ("svb", "splda", "sgs") and (schedule.kappa != 1.0 or schedule.offset != 0):
        raise ValueError(f"{variant} requires the incremental schedule rho_t = 1/t")

    if variant == "splda":
        family = LdaFamily(init_params.copy(), alpha_mode="fixed_point")
        trace = run_online_em(
            corpus_stream, family, VariationalEStep(), schedule,
            minibatch_size, local_iters, boost=True, callback=callback, base_seed=base_seed,
        )
        return VariantRun(trace, None)
    if variant == "sgs":
        frozen = init_params.alpha if alpha_value is None else np.asarray(alpha_value, float)
        family = LdaFamily(init_params.copy(), alpha_mode="frozen", alpha_value=frozen)
        trace = run_online_em(
            corpus_stream, family, GibbsEStep(mode="last_sample"), schedule,
            minibatch_size, local_iters, boost=False, callback=callback, base_seed=base_seed,
        )
        return VariantRun(trace, None)

    # Bayesian variants: olda / svb / vargibbs.
    k, v = init_params.beta.shape
    if init_lambda is not None:
        lam = np.asarray(init_lambda, dtype=float).copy()
    else:
        rng = np.random.default_rng(np.random.SeedSequence([int(base_seed), _SEED_LAMBDA]))
        lam = rng.gamma(100.0, 0.01, size=(k, v))
    state = BayesGlobalState(lam, prior_b, corpus_size)
    alpha = (init_params.alpha if alpha_value is None else np.asarray(alpha_value, float)).copy()
    backend = GibbsEStep(mode="marginals") if variant == "vargibbs" else VariationalEStep()
    update_alpha = variant in ("olda", "svb")

    s2 = np.zeros(k)
    params = ModelParams(state.beta_hat, alpha)
    mean_params = params
    count = 0
    docs_seen = 0
    doc_index = 0
    for i, batch in enumerate(_chunked(corpus_stream, minibatch_size), start=1):
        rho = step_size(schedule, i)
        rngs = [doc_rng(base_seed, doc_index + j) for j in range(len(batch))]
        doc_index += len(batch)

        surrogate = SimpleNamespace(
            beta=np.exp(expected_log_beta(state)), alpha=alpha, n_topics=k, vocab_size=v
        )
        result = backend.run_minibatch(batch, surrogate, local_iters, rngs)
        s_hat = result.mean_stats
        state = lambda_update(state, s_hat.s1, rho, blend=lambda_blend)
        if update_alpha:
            s2 = (1.0 - rho) * s2 + rho * s_hat.s2
            alpha = alpha_gradient_ascent(s2, alpha, learning_rate=gradient_lr, n_steps=gradient_steps)

        params = ModelParams(state.beta_hat, alpha)
        docs_seen += len(batch)
        count += 1
        mean_params = _params_running_mean(mean_params, params, count)
        if callback is not None:
            callback(CheckpointInfo(i, docs_seen, params, mean_params))

    trace = AveragedTrace(last=params, running_mean=mean_params, count=count)
    return VariantRun(trace, state)


def elbo_corpus(docs, state_or_params, alpha=None, n_sweeps: int = 20, chunk: int = 256) -> float:
    """Mean per-document ELBO after n_sweeps local sweeps.

    Accepts either a BayesGlobalState (local step and bound run against the
    surrogate E_q[log beta]) or point ModelParams.  ``alpha`` defaults to the
    point params' alpha and must be given for a BayesGlobalState.
    """
    docs = getattr(docs, "documents", docs)
    if len(docs) == 0:
        raise ValueError("empty document list")
    if isinstance(state_or_params, BayesGlobalState):
        if alpha is None:
            raise ValueError("alpha is required with a BayesGlobalState")
        log_beta = expected_log_beta(state_or_params)
        v = state_or_params.lam.shape[1]
    else:
        params = state_or_params
        if alpha is None:
            alpha = params.alpha
        with np.errstate(divide="ignore"):
            log_beta = np.log(params.beta)
        v = params.vocab_size
    alpha = np.asarray(alpha, dtype=float)

    total = 0.0
    n = 0
    for lo in range(0, len(docs), chunk):
        part = docs[lo:lo + chunk]
        mb = _MinibatchVar(part, alpha, v)
        for _ in range(n_sweeps):
            mb.sweep(log_beta, alpha)
        total += float(mb.elbos(log_beta, alpha).sum())
        n += len(part)
    return total / n
