"""Core online-EM driver over sufficient statistics.

The global state of every method in this package is a blended sufficient
statistic ``s``.  After each minibatch (1-indexed ``i``) the driver applies

    s_i = (1 - rho_i) * s_{i-1} + rho_i * s_hat_i,      rho_i = (i + offset)^-kappa

where ``s_hat_i`` is the unweighted mean of the per-document local-step
estimates, then re-solves the M-step ``params = m_step(s_i)``.  With
``boost=True`` the blend and the M-step are re-applied after every one of the
``local_iters`` local sweeps (with the same ``rho_i``), so the parameters move
while the minibatch is still being processed.

The driver is generic over a model family handle (``m_step``/``blend``/
``combine``) and a local-step backend (``run_minibatch`` plus the
``begin/sweep/snapshot`` triple used when boosting); the LDA and HDP families
plug in through that interface.

All randomness is drawn from per-document generators derived from
``(base_seed, doc_index)`` counters, so runs are bit-reproducible and
independent of how documents are grouped for vectorization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

__all__ = [
    "StepSchedule",
    "SuffStats",
    "AveragedTrace",
    "CheckpointInfo",
    "ResumeState",
    "step_size",
    "blend_stats",
    "minibatch_estimate",
    "doc_rng",
    "stream_rng",
    "run_online_em",
]

# Stream tags keeping the per-purpose generators disjoint.
_TAG_DOC = 1
_TAG_INIT = 2
_TAG_SPLIT = 3
_TAG_EVAL = 4


def doc_rng(base_seed: int, doc_index: int) -> np.random.Generator:
    """Generator for one document's local step, from (seed, index) counters."""
    return np.random.default_rng(np.random.SeedSequence([int(base_seed), _TAG_DOC, int(doc_index)]))


def stream_rng(base_seed: int, tag: int, index: int = 0) -> np.random.Generator:
    """Generator for a named auxiliary stream (init, split, eval...)."""
    return np.random.default_rng(np.random.SeedSequence([int(base_seed), int(tag), int(index)]))


@dataclass(frozen=True)
class StepSchedule:
    """Step-size schedule rho_i = (i + offset)^(-kappa).

    kappa must lie in (0, 1]; kappa = 1 recovers the incremental-EM running
    mean, smaller kappa forgets the past faster.  offset >= 0 only shifts the
    schedule and is provided for stability experiments.
    """

    kappa: float
    offset: int = 0

    def __post_init__(self):
        if not (0.0 < self.kappa <= 1.0):
            raise ValueError(f"kappa must be in (0, 1], got {self.kappa}")
        if self.offset < 0 or int(self.offset) != self.offset:
            raise ValueError(f"offset must be a nonnegative integer, got {self.offset}")

    def rho(self, i: int) -> float:
        return step_size(self, i)


def step_size(schedule: StepSchedule, i: int) -> float:
    """rho_i for minibatch index i >= 1."""
    if i < 1:
        raise ValueError(f"minibatch index must be >= 1, got {i}")
    return float(i + schedule.offset) ** (-schedule.kappa)


@dataclass
class SuffStats:
    """Blended sufficient statistics for the finite-topic family.

    s1 : (K, V) nonnegative word-topic expectations
    s2 : (K,) finite entries, the expected log topic proportions
    """

    s1: np.ndarray
    s2: np.ndarray

    def __post_init__(self):
        self.s1 = np.asarray(self.s1, dtype=float)
        self.s2 = np.asarray(self.s2, dtype=float)
        if self.s1.ndim != 2 or self.s2.ndim != 1 or self.s1.shape[0] != self.s2.shape[0]:
            raise ValueError(f"inconsistent stat shapes {self.s1.shape} / {self.s2.shape}")

    @property
    def n_topics(self) -> int:
        return self.s1.shape[0]

    def copy(self) -> "SuffStats":
        return SuffStats(self.s1.copy(), self.s2.copy())

    @staticmethod
    def zeros(n_topics: int, vocab_size: int) -> "SuffStats":
        return SuffStats(np.zeros((n_topics, vocab_size)), np.zeros(n_topics))


def blend_stats(s_prev: SuffStats, s_hat: SuffStats, rho: float) -> SuffStats:
    """(1 - rho) * s_prev + rho * s_hat."""
    if s_prev.s1.shape != s_hat.s1.shape or s_prev.s2.shape != s_hat.s2.shape:
        raise ValueError(
            f"stat shape mismatch: {s_prev.s1.shape}/{s_prev.s2.shape} vs "
            f"{s_hat.s1.shape}/{s_hat.s2.shape}"
        )
    if not (0.0 < rho <= 1.0):
        raise ValueError(f"rho must be in (0, 1], got {rho}")
    return SuffStats((1.0 - rho) * s_prev.s1 + rho * s_hat.s1,
                     (1.0 - rho) * s_prev.s2 + rho * s_hat.s2)


def minibatch_estimate(per_doc: list) -> SuffStats:
    """Unweighted mean of per-document statistics."""
    if len(per_doc) == 0:
        raise ValueError("empty minibatch")
    s1 = np.mean([s.s1 for s in per_doc], axis=0)
    s2 = np.mean([s.s2 for s in per_doc], axis=0)
    return SuffStats(s1, s2)


@dataclass
class AveragedTrace:
    """Final and Polyak-averaged iterates of a run.

    ``last`` is eta_N, ``running_mean`` the mean of eta_1..eta_N (eta_0 is not
    included), ``count`` the number of minibatches folded in.  For families
    without a well-defined iterate average (topic growth), running_mean stays
    None.  ``resume`` carries the driver state for continuing the stream.
    """

    last: object
    running_mean: object
    count: int = 0
    resume: object = None


@dataclass(frozen=True)
class CheckpointInfo:
    """Snapshot handed to the checkpoint callback after each minibatch."""

    minibatch_index: int
    docs_seen: int
    params: object
    averaged_params: object


@dataclass
class ResumeState:
    """Everything needed to continue a run where it stopped.

    Returned on ``AveragedTrace.resume``; feed it back through the
    ``resume=`` argument to keep the step-size schedule, the per-document
    seed counters and the iterate average advancing as one long stream.
    """

    stats: object
    minibatch_index: int
    doc_index: int
    mean_params: object
    count: int


def _chunked(stream: Iterable, size: int):
    batch = []
    for doc in stream:
        batch.append(doc)
        if len(batch) == size:
            yield batch
            batch = []
    if batch:
        yield batch


def run_online_em(
    corpus_stream: Iterable,
    model,
    estep,
    schedule: StepSchedule,
    minibatch_size: int,
    local_iters: int,
    boost: bool = False,
    callback: Optional[Callable[[CheckpointInfo], None]] = None,
    base_seed: int = 0,
    init_stats=None,
    resume: Optional[ResumeState] = None,
) -> AveragedTrace:
    """Single pass of online EM over ``corpus_stream``.

    Parameters
    ----------
    corpus_stream : iterable of Document
    model : family handle carrying the current parameters and providing
        ``combine(batch_result, params)``, ``blend(s, s_hat, rho)``,
        ``m_step(s, params)`` and ``params_mean(mean, params, count)``.
    estep : local-step backend providing ``run_minibatch`` and, for boosting,
        ``begin_minibatch`` / ``sweep_minibatch`` / ``snapshot_minibatch``.
    schedule, minibatch_size, local_iters : the stochastic-approximation knobs.
    boost : re-apply the blend and M-step after every local sweep.
    callback : called with a CheckpointInfo after each minibatch.
    base_seed : root of the per-document seed counters.
    init_stats : optional s_0 (defaults to zeros; with offset=0 the first
        blend replaces it entirely since rho_1 = 1).
    resume : continue a previous run's schedule, seeds and averages.

    Returns
    -------
    AveragedTrace with the final and the averaged parameters.
    """
    if minibatch_size < 1:
        raise ValueError("minibatch_size must be >= 1")
    if local_iters < 1:
        raise ValueError("local_iters must be >= 1")

    params = model.params
    if resume is not None:
        s = resume.stats
        mean_params = resume.mean_params
        count = resume.count
        doc_index = resume.doc_index
        start = resume.minibatch_index
    else:
        s = init_stats
        mean_params = params
        count = 0
        doc_index = 0
        start = 0
    docs_seen = doc_index

    i = start
    for i, batch in enumerate(_chunked(corpus_stream, minibatch_size), start=start + 1):
        rho = step_size(schedule, i)
        rngs = [doc_rng(base_seed, doc_index + j) for j in range(len(batch))]
        doc_index += len(batch)

        if s is None:
            s = model.init_stats(params)

        if not boost:
            result = estep.run_minibatch(batch, params, local_iters, rngs)
            s_hat, params = model.combine(result, params)
            s = model.blend(s, s_hat, rho)
            params = model.m_step(s, params)
        else:
            state = estep.begin_minibatch(batch, params, local_iters, rngs)
            for _ in range(local_iters):
                estep.sweep_minibatch(state, params)
                result = estep.snapshot_minibatch(state, params)
                s_hat, params = model.combine(result, params)
                s = model.blend(s, s_hat, rho)
                params = model.m_step(s, params)

        model.params = params
        docs_seen += len(batch)
        count += 1
        mean_params = model.params_mean(mean_params, params, count)
        if callback is not None:
            callback(CheckpointInfo(i, docs_seen, params, mean_params))

    return AveragedTrace(
        last=params,
        running_mean=mean_params,
        count=count,
        resume=ResumeState(s, i, doc_index, mean_params, count),
    )
