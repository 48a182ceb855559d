"""Dense linear-algebra helpers shared by every module.

All covariance solves in this package go through a Cholesky factorization
with an escalating diagonal jitter; explicit matrix inverses are reserved
for test oracles.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import PositiveDefiniteError

JITTER_INITIAL = 1e-10
JITTER_MAX = 1e-4

LOG_2PI_E = math.log(2.0 * math.pi) + 1.0


def chol(a: np.ndarray, scale: float) -> np.ndarray:
    """Lower Cholesky factor of ``a`` with escalating diagonal jitter.

    On failure the diagonal is inflated by ``1e-10 * scale`` growing tenfold
    up to ``1e-4 * scale`` before raising. ``scale`` should be the kernel
    signal variance (or a comparable magnitude) so the ladder is invariant
    to the units of the phenomenon.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER_INITIAL * scale
    limit = JITTER_MAX * scale
    eye = np.eye(n)
    while jitter <= limit * (1.0 + 1e-12):
        try:
            return np.linalg.cholesky(a + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise PositiveDefiniteError(
        f"{n}x{n} matrix not positive definite after jitter up to {limit:g}"
    )


def chol_solve(lower: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``L L^T x = b`` given the lower factor ``L``."""
    if lower.shape[0] == 0:
        return np.zeros_like(b)
    return cho_solve((lower, True), b)


def tri_solve(lower: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``L x = b`` by forward substitution (``L`` lower triangular)."""
    if lower.shape[0] == 0:
        return np.zeros_like(b)
    return solve_triangular(lower, b, lower=True)


def logdet_from_chol(lower: np.ndarray) -> float:
    """log det of ``L L^T`` from its lower factor."""
    if lower.shape[0] == 0:
        return 0.0
    return 2.0 * float(np.sum(np.log(np.diag(lower))))


def gaussian_entropy(cov: np.ndarray, scale: float | None = None) -> float:
    """Differential entropy ``0.5 log((2 pi e)^n det cov)`` via Cholesky."""
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    if n == 0:
        return 0.0
    if scale is None:
        scale = max(float(np.max(np.diag(cov))), 1e-300)
    lower = chol(cov, scale)
    return 0.5 * (n * LOG_2PI_E + logdet_from_chol(lower))


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Average away floating-point asymmetry."""
    return 0.5 * (a + a.T)
