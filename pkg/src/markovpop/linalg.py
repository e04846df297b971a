"""Multivariate normal algebra on Cholesky factors."""
from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import DimensionMismatch, NonPositiveDiagonal, NotPositiveDefinite

LOG_2PI = np.log(2.0 * np.pi)
JITTER_LADDER = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8)


def cholesky_jitter(cov, ladder=JITTER_LADDER) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``cov + jitter*I`` with the smallest jitter that works."""
    cov = np.asarray(cov, dtype=float)
    eye = np.eye(cov.shape[0])
    for jitter in ladder:
        try:
            return np.linalg.cholesky(cov + jitter * eye), jitter
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefinite(f"Cholesky failed with jitter up to {ladder[-1]:g}")


def _check_chol(chol):
    chol = np.asarray(chol, dtype=float)
    if chol.ndim != 2 or chol.shape[0] != chol.shape[1]:
        raise DimensionMismatch("Cholesky factor must be square")
    diag = np.diag(chol)
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        raise NonPositiveDiagonal("Cholesky factor needs a positive diagonal")
    return chol


def mvn_logpdf(x, mean, chol) -> float | np.ndarray:
    """Gaussian log density; ``x`` may carry leading batch axes."""
    chol = _check_chol(chol)
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    k = chol.shape[0]
    if x.shape[-1] != k or mean.shape[-1] != k:
        raise DimensionMismatch(f"expected trailing dimension {k}")
    r = np.moveaxis(np.atleast_2d(x - mean), -1, 0).reshape(k, -1)
    z = solve_triangular(chol, r, lower=True)
    quad = np.sum(z**2, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    out = -0.5 * (k * LOG_2PI + logdet + quad)
    if x.ndim == 1:
        return float(out[0])
    return out.reshape(x.shape[:-1])


def mvn_condition(mean, cov, observed, values) -> tuple[np.ndarray, np.ndarray]:
    """Condition a joint normal on some coordinates taking ``values``.

    Returns the mean and covariance of the remaining coordinates, in their
    original order.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    k = mean.size
    if cov.shape != (k, k):
        raise DimensionMismatch("covariance does not match mean")
    obs = np.asarray(observed, dtype=int)
    values = np.asarray(values, dtype=float)
    if values.shape != obs.shape:
        raise DimensionMismatch("one value per observed index")
    mask = np.zeros(k, dtype=bool)
    mask[obs] = True
    free = np.flatnonzero(~mask)
    if obs.size == 0:
        return mean.copy(), cov.copy()
    L, _ = cholesky_jitter(cov[np.ix_(obs, obs)])
    cross = cov[np.ix_(free, obs)]
    cond_mean = mean[free] + cross @ cho_solve((L, True), values - mean[obs])
    cond_cov = cov[np.ix_(free, free)] - cross @ cho_solve((L, True), cross.T)
    return cond_mean, 0.5 * (cond_cov + cond_cov.T)
