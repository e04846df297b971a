"""Nelder-Mead simplex minimization and finite-difference curvature."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import MarkovPopError, NoProgress


@dataclass(frozen=True)
class NelderMeadConfig:
    initial_step: float = 0.1
    xtol: float = 1e-8
    ftol: float = 1e-10
    max_iter: int = 5000
    restarts: int = 1


@dataclass(frozen=True)
class OptimizeResult:
    x: np.ndarray
    fun: float
    n_iter: int
    n_eval: int
    converged: bool


def _safe(f):
    def wrapped(x):
        try:
            v = float(f(x))
        except (ArithmeticError, ValueError, np.linalg.LinAlgError, MarkovPopError):
            return np.inf
        return v if np.isfinite(v) else np.inf

    return wrapped


def _simplex_run(f, x0, step, cfg):
    n = x0.size
    pts = np.vstack([x0] + [x0 + step * e for e in np.eye(n)])
    vals = np.array([f(p) for p in pts])
    n_eval = n + 1
    for it in range(1, cfg.max_iter + 1):
        order = np.argsort(vals, kind="stable")
        pts, vals = pts[order], vals[order]
        diam = np.max(np.linalg.norm(pts[1:] - pts[0], axis=1))
        if diam < cfg.xtol or (np.isfinite(vals[-1]) and vals[-1] - vals[0] < cfg.ftol):
            return pts[0], vals[0], it, n_eval, True
        centroid = pts[:-1].mean(axis=0)
        worst = pts[-1]
        xr = centroid + (centroid - worst)
        fr = f(xr)
        n_eval += 1
        if vals[0] <= fr < vals[-2]:
            pts[-1], vals[-1] = xr, fr
            continue
        if fr < vals[0]:
            xe = centroid + 2.0 * (xr - centroid)
            fe = f(xe)
            n_eval += 1
            pts[-1], vals[-1] = (xe, fe) if fe < fr else (xr, fr)
            continue
        if fr < vals[-1]:
            xc = centroid + 0.5 * (xr - centroid)
            fc = f(xc)
            n_eval += 1
            if fc <= fr:
                pts[-1], vals[-1] = xc, fc
                continue
        else:
            xc = centroid + 0.5 * (worst - centroid)
            fc = f(xc)
            n_eval += 1
            if fc < vals[-1]:
                pts[-1], vals[-1] = xc, fc
                continue
        pts[1:] = pts[0] + 0.5 * (pts[1:] - pts[0])
        vals[1:] = [f(p) for p in pts[1:]]
        n_eval += n
    best = int(np.argmin(vals))
    return pts[best], vals[best], cfg.max_iter, n_eval, False


def nelder_mead(objective, x0, cfg: NelderMeadConfig | None = None) -> OptimizeResult:
    """Minimize ``objective`` with the standard simplex moves.

    Coefficients: reflection 1, expansion 2, contraction 0.5, shrink 0.5.
    Stops on simplex diameter below ``xtol``, value spread below ``ftol``,
    or ``max_iter``; then restarts from the best point with a fresh simplex
    of the same initial step. Non-finite objective values count as ``+inf``.
    """
    cfg = cfg or NelderMeadConfig()
    f = _safe(objective)
    x = np.asarray(x0, dtype=float).copy()
    if not np.isfinite(f(x)):
        raise ValueError("objective is not finite at the starting point")
    total_it = total_eval = 0
    any_converged = False
    fx = np.inf
    for _ in range(cfg.restarts + 1):
        x, fx, it, ne, ok = _simplex_run(f, x, cfg.initial_step, cfg)
        total_it += it
        total_eval += ne
        any_converged = any_converged or ok
    if not any_converged:
        warnings.warn("Nelder-Mead hit its iteration cap without meeting tolerance", NoProgress)
    return OptimizeResult(x, float(fx), total_it, total_eval, any_converged)


def numerical_hessian(f, x, step: float = 1e-3) -> np.ndarray:
    """Central-difference Hessian of a scalar function."""
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.empty((n, n))
    f0 = f(x)
    E = np.eye(n) * step
    for i in range(n):
        H[i, i] = (f(x + E[i]) - 2 * f0 + f(x - E[i])) / step**2
        for j in range(i):
            H[i, j] = H[j, i] = (
                f(x + E[i] + E[j]) - f(x + E[i] - E[j]) - f(x - E[i] + E[j]) + f(x - E[i] - E[j])
            ) / (4 * step**2)
    return H


def wald_intervals_log(neg_loglik_log, log_hat, level_z: float = 1.959963984540054, step: float = 1e-3):
    """Wald intervals on the natural scale for a fit done on log parameters.

    The curvature of the negative log likelihood in log coordinates is
    mapped to the natural scale by the delta method. Returns
    ``(low, high, sd)``; all NaN if the curvature is not positive definite.
    """
    log_hat = np.asarray(log_hat, dtype=float)
    H = numerical_hessian(neg_loglik_log, log_hat, step)
    theta = np.exp(log_hat)
    try:
        np.linalg.cholesky(H)
        cov_log = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        nan = np.full_like(theta, np.nan)
        return nan, nan, nan
    sd = theta * np.sqrt(np.diag(cov_log))
    return theta - level_z * sd, theta + level_z * sd, sd
