"""Digamma forward/inverse kernels shared by the Dirichlet-style M-steps."""

import numpy as np
from scipy.special import digamma, polygamma

__all__ = ["digamma", "inverse_digamma"]

_EULER_GAMMA = 0.5772156649015329  # -digamma(1)


def inverse_digamma(y, n_iter=8):
    """Solve digamma(x) = y for x > 0 by Newton iteration.

    Uses the standard piecewise initialization (exp(y) + 0.5 for y >= -2.22,
    -1/(y + gamma) below) after which Newton converges to ~1e-14 in a handful
    of steps.  Accepts scalars or arrays.
    """
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("inverse_digamma: non-finite input")
    x = np.where(y >= -2.22, np.exp(y) + 0.5, -1.0 / (y + _EULER_GAMMA))
    for _ in range(n_iter):
        x = np.maximum(x - (digamma(x) - y) / polygamma(1, x), 1e-300)
    if y.ndim == 0:
        return float(x)
    return x
