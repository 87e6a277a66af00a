"""Estimator facades over the streaming drivers.

These follow the usual fit/partial_fit/transform conventions so the models
drop into pipelines and grid searches; the heavy lifting stays in
:mod:`topicem.online_em`, :mod:`topicem.bayes` and :mod:`topicem.hdp`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .bayes import BAYES_VARIANTS, run_variant
from .evaluation import left_to_right
from .gibbs import GibbsEStep
from .harness import init_point_params
from .hdp import (
    HdpBayesState,
    HdpFamily,
    HdpGibbsEStep,
    HdpParams,
    run_hdp_vargibbs,
)
from .lda import LdaFamily, ModelParams
from .online_em import StepSchedule, run_online_em, stream_rng
from .validation import as_documents, check_positive, resolve_seed
from .variational import VariationalEStep, variational_estep

__all__ = ["OnlineLDA", "BayesianOnlineLDA", "OnlineHDP"]

_TAG_INIT = 2
_TAG_EVAL = 4


class _EvalMixin:
    """Held-out scoring shared by the facades (left-to-right estimator)."""

    def _eval_params(self):
        raise NotImplementedError

    def score(self, X, y=None):
        """Mean per-document held-out log-likelihood (higher is better)."""
        params = self._eval_params()
        docs, _ = as_documents(X, self.vocab_size_)
        seed = resolve_seed(self.random_state)
        lls = [
            left_to_right(doc, params, self.eval_particles, stream_rng(seed, _TAG_EVAL))
            for doc in docs
        ]
        return float(np.mean(lls))

    def perplexity(self, X):
        """exp(-total log-likelihood / total tokens) on held-out documents."""
        params = self._eval_params()
        docs, _ = as_documents(X, self.vocab_size_)
        seed = resolve_seed(self.random_state)
        total_ll = 0.0
        total_tokens = 0
        for doc in docs:
            total_ll += left_to_right(doc, params, self.eval_particles,
                                      stream_rng(seed, _TAG_EVAL))
            total_tokens += len(doc.word_ids)
        return float(np.exp(-total_ll / total_tokens))

    def transform(self, X):
        """Posterior mean topic proportions per document (variational)."""
        params = self._eval_params()
        docs, _ = as_documents(X, self.vocab_size_)
        out = np.empty((len(docs), params.beta.shape[0]))
        for i, doc in enumerate(docs):
            res = variational_estep(doc, params, n_sweeps=self.transform_iters)
            gamma = res.state.gamma
            out[i] = gamma / gamma.sum()
        return out


class OnlineLDA(_EvalMixin, BaseEstimator):
    """Streaming topic model fit by blended sufficient statistics.

    Parameters
    ----------
    n_topics : number of topics K.
    inference : "gibbs" for collapsed sampling local steps, "variational"
        for deterministic coordinate ascent.
    boost : re-apply the blend and M-step after every local sweep.
    kappa, offset : step-size schedule rho_i = (i + offset)^(-kappa).
    minibatch_size, local_iters : stream granularity and sweeps per document.
    alpha_mode : "fixed_point", "gradient" or "frozen".
    averaging : also maintain the mean of the parameter iterates; when on,
        ``components_`` and ``alpha_`` expose the averaged parameters and the
        final iterate moves to ``components_last_`` / ``alpha_last_``.
    beta_floor : smallest admissible topic-word probability after each
        M-step (keeps unseen words sampleable).
    eval_particles : particles for score()/perplexity().
    transform_iters : local sweeps used by transform().
    random_state : integer root for all seed counters (None means 0).
    """

    def __init__(
        self,
        n_topics: int = 10,
        inference: str = "gibbs",
        boost: bool = False,
        kappa: float = 0.5,
        offset: int = 0,
        minibatch_size: int = 100,
        local_iters: int = 20,
        alpha_mode: str = "fixed_point",
        alpha_value=None,
        averaging: bool = False,
        beta_floor: float = 1e-10,
        eval_particles: int = 30,
        transform_iters: int = 50,
        random_state=None,
    ):
        self.n_topics = n_topics
        self.inference = inference
        self.boost = boost
        self.kappa = kappa
        self.offset = offset
        self.minibatch_size = minibatch_size
        self.local_iters = local_iters
        self.alpha_mode = alpha_mode
        self.alpha_value = alpha_value
        self.averaging = averaging
        self.beta_floor = beta_floor
        self.eval_particles = eval_particles
        self.transform_iters = transform_iters
        self.random_state = random_state

    def _make_backend(self):
        if self.inference == "gibbs":
            return GibbsEStep()
        if self.inference == "variational":
            return VariationalEStep()
        raise ValueError(f"unknown inference {self.inference!r}")

    def _start(self, vocab_size):
        seed = resolve_seed(self.random_state)
        params = init_point_params(self.n_topics, vocab_size, seed)
        alpha_value = None if self.alpha_value is None else np.asarray(self.alpha_value, float)
        self._family = LdaFamily(
            params,
            alpha_mode=self.alpha_mode,
            alpha_value=alpha_value,
            beta_floor=check_positive("beta_floor", self.beta_floor, strict=False),
        )
        self._schedule = StepSchedule(self.kappa, self.offset)
        self._backend = self._make_backend()
        self._resume = None
        self.vocab_size_ = vocab_size
        self.n_minibatches_ = 0

    def partial_fit(self, X, y=None, vocab_size=None):
        """Consume one more chunk of the stream (same schedule and seeds)."""
        if not hasattr(self, "_family"):
            docs, v = as_documents(X, vocab_size)
            self._start(v)
        else:
            docs, _ = as_documents(X, self.vocab_size_)
        trace = run_online_em(
            docs,
            self._family,
            self._backend,
            self._schedule,
            self.minibatch_size,
            self.local_iters,
            boost=self.boost,
            base_seed=resolve_seed(self.random_state),
            resume=self._resume,
        )
        self._resume = trace.resume
        self._publish(trace)
        return self

    def fit(self, X, y=None):
        """Single streaming pass over ``X`` from fresh parameters."""
        docs, v = as_documents(X)
        self._start(v)
        return self.partial_fit(docs)

    def _publish(self, trace):
        self.n_minibatches_ = trace.resume.minibatch_index
        last = trace.last
        self.components_last_ = last.beta
        self.alpha_last_ = last.alpha
        if self.averaging and trace.running_mean is not None:
            mean = trace.running_mean
            self.components_ = mean.beta
            self.alpha_ = mean.alpha
        else:
            self.components_ = last.beta
            self.alpha_ = last.alpha

    def _eval_params(self):
        if not hasattr(self, "components_"):
            raise RuntimeError("estimator is not fitted")
        return ModelParams(self.components_, self.alpha_)


class BayesianOnlineLDA(_EvalMixin, BaseEstimator):
    """Posterior-tracking variants sharing the same stream interface.

    ``variant`` selects the update rule: "olda" and "svb" keep a Dirichlet
    posterior over topics (natural-gradient blends, gradient alpha), "splda"
    runs the boosted variational point estimator with kappa = 1, "sgs" the
    single-sample collapsed sampler with kappa = 1, and "vargibbs" samples
    against the Dirichlet posterior's collapsed surrogate.
    """

    def __init__(
        self,
        variant: str = "olda",
        n_topics: int = 10,
        kappa: float = 0.5,
        offset: int = 0,
        minibatch_size: int = 100,
        local_iters: int = 20,
        prior_b: float = 0.01,
        lambda_blend: str = "standard",
        alpha_value=None,
        gradient_lr: float = 1e-3,
        gradient_steps: int = 10,
        eval_particles: int = 30,
        transform_iters: int = 50,
        random_state=None,
    ):
        self.variant = variant
        self.n_topics = n_topics
        self.kappa = kappa
        self.offset = offset
        self.minibatch_size = minibatch_size
        self.local_iters = local_iters
        self.prior_b = prior_b
        self.lambda_blend = lambda_blend
        self.alpha_value = alpha_value
        self.gradient_lr = gradient_lr
        self.gradient_steps = gradient_steps
        self.eval_particles = eval_particles
        self.transform_iters = transform_iters
        self.random_state = random_state

    def fit(self, X, y=None):
        if self.variant not in BAYES_VARIANTS:
            raise ValueError(f"variant must be one of {BAYES_VARIANTS}")
        docs, v = as_documents(X)
        seed = resolve_seed(self.random_state)
        kappa = 1.0 if self.variant in ("svb", "splda", "sgs") else self.kappa
        offset = 0 if self.variant in ("svb", "splda", "sgs") else self.offset
        params = init_point_params(self.n_topics, v, seed)
        alpha_value = None if self.alpha_value is None else np.asarray(self.alpha_value, float)
        run = run_variant(
            self.variant,
            docs,
            params,
            StepSchedule(kappa, offset),
            self.minibatch_size,
            self.local_iters,
            corpus_size=len(docs),
            base_seed=seed,
            prior_b=self.prior_b,
            lambda_blend=self.lambda_blend,
            alpha_value=alpha_value,
            gradient_lr=self.gradient_lr,
            gradient_steps=self.gradient_steps,
        )
        final = run.trace.last
        self.components_ = final.beta
        self.alpha_ = final.alpha
        self.state_ = run.state
        self.vocab_size_ = v
        self.n_minibatches_ = run.trace.count
        return self

    def _eval_params(self):
        if not hasattr(self, "components_"):
            raise RuntimeError("estimator is not fitted")
        return ModelParams(self.components_, self.alpha_)


class OnlineHDP(_EvalMixin, BaseEstimator):
    """Streaming unbounded-topics model.

    ``inference="gibbs"`` grows topics with the collapsed sampler and refits
    point parameters; ``inference="vargibbs"`` keeps a truncated variational
    posterior updated from Gibbs samples.
    """

    def __init__(
        self,
        inference: str = "gibbs",
        b: float = 1.0,
        alpha_conc: float = 1.0,
        kappa: float = 0.5,
        offset: int = 0,
        minibatch_size: int = 100,
        local_iters: int = 20,
        t_init: int = 2,
        t_max: int = 200,
        truncation: int = 50,
        prior_eta: float = 0.01,
        beta_floor=None,
        eval_particles: int = 30,
        transform_iters: int = 50,
        random_state=None,
    ):
        self.inference = inference
        self.b = b
        self.alpha_conc = alpha_conc
        self.kappa = kappa
        self.offset = offset
        self.minibatch_size = minibatch_size
        self.local_iters = local_iters
        self.t_init = t_init
        self.t_max = t_max
        self.truncation = truncation
        self.prior_eta = prior_eta
        self.beta_floor = beta_floor
        self.eval_particles = eval_particles
        self.transform_iters = transform_iters
        self.random_state = random_state

    def _start(self, vocab_size):
        seed = resolve_seed(self.random_state)
        rng = stream_rng(seed, _TAG_INIT)
        if self.inference == "gibbs":
            beta = rng.dirichlet(np.ones(vocab_size), size=self.t_init)
            pibar = rng.beta(1.0, self.alpha_conc, size=self.t_init)
            pi = pibar * np.concatenate([[1.0], np.cumprod(1.0 - pibar[:-1])])
            params = HdpParams(beta, pi, self.b, self.alpha_conc)
            floor = 0.01 / vocab_size if self.beta_floor is None else self.beta_floor
            self._family = HdpFamily(params, t_max=self.t_max, beta_floor=floor)
            self._backend = HdpGibbsEStep(t_max=self.t_max)
            self._resume = None
        elif self.inference == "vargibbs":
            t = self.truncation
            lam = rng.gamma(100.0, 0.01, size=(t, vocab_size))
            self._state = HdpBayesState(
                lam,
                np.ones(t),
                np.full(t, self.alpha_conc),
                self.b,
                self.alpha_conc,
                self.prior_eta,
                corpus_size=1,  # patched per fit call
            )
            self._next = (0, 0)
        else:
            raise ValueError(f"unknown inference {self.inference!r}")
        self._schedule = StepSchedule(self.kappa, self.offset)
        self.vocab_size_ = vocab_size
        self.n_minibatches_ = 0

    def partial_fit(self, X, y=None, vocab_size=None):
        fresh = not hasattr(self, "vocab_size_")
        if fresh:
            docs, v = as_documents(X, vocab_size)
            self._start(v)
        else:
            docs, _ = as_documents(X, self.vocab_size_)
        seed = resolve_seed(self.random_state)
        if self.inference == "gibbs":
            trace = run_online_em(
                docs,
                self._family,
                self._backend,
                self._schedule,
                self.minibatch_size,
                self.local_iters,
                base_seed=seed,
                resume=self._resume,
            )
            self._resume = trace.resume
            self.params_ = trace.last
            self.n_minibatches_ = trace.resume.minibatch_index
        else:
            self._state.corpus_size = max(len(docs), 1)
            start_i, start_d = self._next
            trace = run_hdp_vargibbs(
                docs,
                self._state,
                self._schedule,
                self.minibatch_size,
                self.local_iters,
                base_seed=seed,
                start_minibatch=start_i,
                start_doc_index=start_d,
            )
            self._state = trace.state
            self._next = (trace.next_minibatch, trace.next_doc_index)
            self.params_ = trace.last
            self.n_minibatches_ = trace.next_minibatch
        self.components_ = self.params_.beta
        self.pi_ = self.params_.pi
        self.n_topics_ = self.params_.n_topics
        return self

    def fit(self, X, y=None):
        docs, v = as_documents(X)
        self._start(v)
        if self.inference == "vargibbs":
            self._state.corpus_size = len(docs)
        return self.partial_fit(docs)

    def _eval_params(self):
        if not hasattr(self, "params_"):
            raise RuntimeError("estimator is not fitted")
        p = self.params_
        return ModelParams(p.beta, p.b * p.pi / p.pi.sum())
