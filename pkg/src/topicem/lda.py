"""Finite-topic model family: parameters, M-step, and the alpha solvers.

The model is the standard mixed-membership bag-of-words generative process
(per-document Dirichlet(alpha) proportions, per-token topic draw, per-token
word draw from the topic's row of beta), treated as an exponential family in
the non-canonical parameter eta = (beta, alpha).  The M-step is available in
closed form for beta and as a digamma fixed point for alpha.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln

from .online_em import SuffStats, blend_stats
from .special import inverse_digamma

__all__ = [
    "ModelParams",
    "m_step",
    "alpha_fixed_point",
    "alpha_gradient_ascent",
    "alpha_objective",
    "log_joint",
    "save_model_params",
    "load_model_params",
    "LdaFamily",
]

_SIMPLEX_TOL = 1e-9


@dataclass
class ModelParams:
    """Point parameters (beta, alpha).

    beta : (K, V) topic-word matrix, each row on the simplex (tol 1e-9)
    alpha : (K,) strictly positive Dirichlet parameter
    """

    beta: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float)
        if self.beta.ndim != 2:
            raise ValueError("beta must be a (K, V) matrix")
        if self.alpha.shape != (self.beta.shape[0],):
            raise ValueError(
                f"alpha shape {self.alpha.shape} does not match beta {self.beta.shape}"
            )
        if not np.all(np.isfinite(self.beta)) or not np.all(np.isfinite(self.alpha)):
            raise ValueError("non-finite parameter entries")
        if np.any(self.beta < 0):
            raise ValueError("beta has negative entries")
        row_err = np.max(np.abs(self.beta.sum(axis=1) - 1.0)) if self.beta.size else 0.0
        if row_err > _SIMPLEX_TOL:
            raise ValueError(f"beta rows are off the simplex by {row_err:.3e}")
        if np.any(self.alpha <= 0):
            raise ValueError("alpha must be strictly positive")

    @property
    def n_topics(self) -> int:
        return self.beta.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.beta.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(self.beta.copy(), self.alpha.copy())


def alpha_objective(s2: np.ndarray, alpha: np.ndarray) -> float:
    """<alpha, s2> - psi(alpha), the alpha part of the M-step objective."""
    return float(np.dot(alpha, s2) - np.sum(gammaln(alpha)) + gammaln(np.sum(alpha)))


def alpha_fixed_point(s2, alpha0=None, tol: float = 1e-8, max_iter: int = 20000):
    """Solve digamma(alpha_k) - digamma(sum alpha) = s2_k by fixed point.

    Iterates alpha_k <- invdigamma(digamma(sum alpha) + s2_k) until the
    stationarity residual drops below tol.  Raises on non-convergence or
    non-finite iterates (e.g. when s2 is not a realizable mean-log vector).
    The linear rate degrades as 1 - (K-1)/(2 sum alpha), so the iteration
    budget must cover concentrated solutions; the default absorbs sums in
    the low thousands.
    """
    s2 = np.asarray(s2, dtype=float)
    if not np.all(np.isfinite(s2)):
        raise ValueError("alpha_fixed_point: non-finite s2")
    alpha = np.ones_like(s2) if alpha0 is None else np.asarray(alpha0, dtype=float).copy()
    if np.any(alpha <= 0):
        raise ValueError("alpha_fixed_point: alpha0 must be positive")
    for _ in range(max_iter):
        resid = digamma(alpha) - digamma(alpha.sum()) - s2
        if np.max(np.abs(resid)) <= tol:
            return alpha
        alpha = inverse_digamma(digamma(alpha.sum()) + s2)
        if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0):
            raise RuntimeError("alpha_fixed_point: iterate left the domain")
    raise RuntimeError(
        f"alpha_fixed_point did not converge in {max_iter} iterations "
        f"(residual {np.max(np.abs(resid)):.3e})"
    )


def alpha_gradient_ascent(s2, alpha0, learning_rate: float = 1e-3, n_steps: int = 10):
    """Projected gradient ascent on the alpha objective.

    Raises after 5 consecutive objective decreases (divergence guard).
    """
    s2 = np.asarray(s2, dtype=float)
    alpha = np.asarray(alpha0, dtype=float).copy()
    prev = alpha_objective(s2, alpha)
    falling = 0
    for _ in range(n_steps):
        grad = s2 - digamma(alpha) + digamma(alpha.sum())
        alpha = np.maximum(alpha + learning_rate * grad, 1e-10)
        obj = alpha_objective(s2, alpha)
        falling = falling + 1 if obj < prev else 0
        if falling >= 5:
            raise RuntimeError("alpha_gradient_ascent is diverging (5 consecutive decreases)")
        prev = obj
    return alpha


def m_step(
    stats: SuffStats,
    alpha_mode: str = "fixed_point",
    alpha_init=None,
    fp_tol: float = 1e-8,
    fp_max_iter: int = 20000,
    gradient_lr: float = 1e-3,
    gradient_steps: int = 10,
    beta_floor: float = 0.0,
) -> ModelParams:
    """Map blended sufficient statistics to the maximizing parameters.

    beta rows are the normalized s1 rows; a row with zero mass signals an
    unused topic and is reset to uniform with a warning.  alpha is obtained
    per ``alpha_mode``: "fixed_point" (default), "gradient", "frozen"
    (returns alpha_init unchanged), or "gamma_prior" (unsupported stub).

    beta_floor > 0 floors beta entries before renormalizing (training passes
    use a ~1e-10 floor so that a word absent from early minibatches cannot
    zero out a whole column and kill later local conditionals; the default
    keeps the exact closed form).
    """
    s1 = np.asarray(stats.s1, dtype=float)
    s2 = np.asarray(stats.s2, dtype=float)
    if np.any(s1 < 0):
        raise ValueError("m_step: s1 must be nonnegative")
    if not np.all(np.isfinite(s2)):
        raise ValueError("m_step: s2 must be finite")

    row_sums = s1.sum(axis=1)
    dead = row_sums <= 0.0
    if np.any(dead):
        warnings.warn(
            f"m_step: {int(dead.sum())} topic(s) received no mass; resetting to uniform",
            RuntimeWarning,
        )
    v = s1.shape[1]
    beta = np.where(dead[:, None], 1.0 / v, s1 / np.where(dead, 1.0, row_sums)[:, None])
    if beta_floor > 0.0:
        beta = np.maximum(beta, beta_floor)
        beta = beta / beta.sum(axis=1, keepdims=True)

    if alpha_mode == "fixed_point":
        alpha = alpha_fixed_point(s2, alpha0=alpha_init, tol=fp_tol, max_iter=fp_max_iter)
    elif alpha_mode == "gradient":
        a0 = np.ones(s1.shape[0]) if alpha_init is None else alpha_init
        alpha = alpha_gradient_ascent(s2, a0, learning_rate=gradient_lr, n_steps=gradient_steps)
    elif alpha_mode == "frozen":
        if alpha_init is None:
            raise ValueError("alpha_mode='frozen' requires alpha_init")
        alpha = np.asarray(alpha_init, dtype=float).copy()
    elif alpha_mode == "gamma_prior":
        raise NotImplementedError(
            "no published closed-form update for the gamma-prior alpha mode; "
            "use 'fixed_point', 'gradient', or 'frozen'"
        )
    else:
        raise ValueError(f"unknown alpha_mode {alpha_mode!r}")
    return ModelParams(beta, alpha)


def log_joint(doc, z, theta, params: ModelParams) -> float:
    """Exact log p(X, Z, theta | beta, alpha) for one document.

    Includes the Dirichlet base measure; for K=1 the Dirichlet is degenerate
    and the value reduces to sum_n log beta[0, x_n].
    """
    word_ids = np.asarray(getattr(doc, "word_ids", doc), dtype=int)
    z = np.asarray(z, dtype=int)
    theta = np.asarray(theta, dtype=float)
    k, _ = params.beta.shape
    if z.shape != word_ids.shape:
        raise ValueError("z must assign one topic per token")
    if np.any(z < 0) or np.any(z >= k):
        raise ValueError("topic assignment out of range")
    if theta.shape != (k,) or abs(theta.sum() - 1.0) > 1e-8 or np.any(theta < 0):
        raise ValueError("theta must lie on the K-simplex")

    alpha = params.alpha
    with np.errstate(divide="ignore"):
        log_theta = np.log(theta)
        log_beta = np.log(params.beta)
    dirichlet = gammaln(alpha.sum()) - np.sum(gammaln(alpha)) + np.sum(
        np.where(alpha == 1.0, 0.0, (alpha - 1.0) * log_theta)
    )
    tokens = np.sum(log_theta[z]) + np.sum(log_beta[z, word_ids])
    return float(dirichlet + tokens)


def save_model_params(params: ModelParams, path) -> None:
    """Text dump: JSON header line, then beta rows and the alpha line."""
    with open(path, "w") as fh:
        fh.write(json.dumps({"n_topics": params.n_topics, "vocab_size": params.vocab_size}))
        fh.write("\n")
        for row in params.beta:
            fh.write(" ".join(repr(float(x)) for x in row))
            fh.write("\n")
        fh.write(" ".join(repr(float(x)) for x in params.alpha))
        fh.write("\n")


def load_model_params(path) -> ModelParams:
    with open(path) as fh:
        header = json.loads(fh.readline())
        k, v = int(header["n_topics"]), int(header["vocab_size"])
        rows = [np.array(fh.readline().split(), dtype=float) for _ in range(k + 1)]
    beta = np.vstack(rows[:k])
    alpha = rows[k]
    if beta.shape != (k, v) or alpha.shape != (k,):
        raise ValueError(f"corrupt parameter file {path}")
    return ModelParams(beta, alpha)


class LdaFamily:
    """Family handle plugging the finite-topic M-step into the online-EM driver."""

    def __init__(
        self,
        params: ModelParams,
        alpha_mode: str = "fixed_point",
        alpha_value=None,
        gradient_lr: float = 1e-3,
        gradient_steps: int = 10,
        fp_tol: float = 1e-8,
        fp_max_iter: int = 20000,
        beta_floor: float = 1e-10,
    ):
        self.params = params
        self.alpha_mode = alpha_mode
        self.alpha_value = None if alpha_value is None else np.asarray(alpha_value, dtype=float)
        self.gradient_lr = gradient_lr
        self.gradient_steps = gradient_steps
        self.fp_tol = fp_tol
        self.fp_max_iter = fp_max_iter
        self.beta_floor = beta_floor
        if alpha_mode == "frozen" and self.alpha_value is None:
            self.alpha_value = params.alpha.copy()

    def init_stats(self, params: ModelParams) -> SuffStats:
        return SuffStats.zeros(params.n_topics, params.vocab_size)

    def combine(self, batch_result, params):
        return batch_result.mean_stats, params

    def blend(self, s, s_hat, rho):
        return blend_stats(s, s_hat, rho)

    def m_step(self, s: SuffStats, params: ModelParams) -> ModelParams:
        alpha_init = self.alpha_value if self.alpha_mode == "frozen" else params.alpha
        return m_step(
            s,
            alpha_mode=self.alpha_mode,
            alpha_init=alpha_init,
            fp_tol=self.fp_tol,
            fp_max_iter=self.fp_max_iter,
            gradient_lr=self.gradient_lr,
            gradient_steps=self.gradient_steps,
            beta_floor=self.beta_floor,
        )

    def params_mean(self, mean: ModelParams, params: ModelParams, count: int) -> ModelParams:
        beta = mean.beta + (params.beta - mean.beta) / count
        alpha = mean.alpha + (params.alpha - mean.alpha) / count
        return ModelParams(beta, alpha)
