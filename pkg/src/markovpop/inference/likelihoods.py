"""Observation likelihoods built on the deterministic path or the joint normal."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .. import ode as ode_mod
from ..errors import AllSamplesDegenerate, DimensionMismatch
from ..jgdla import JgdlaDistribution, sample_joint
from ..model import ReactionNetwork, Trajectory, time_indices

log = logging.getLogger(__name__)

P_CLAMP = 1e-9
DEGENERATE_LOGLIK = -1e300


def det_model_loglik(net: ReactionNetwork, theta, sigma: float, data: Trajectory, x0,
                     h: float = ode_mod.DEFAULT_H, sol: ode_mod.OdeSolution | None = None) -> float:
    """Independent ``N(x(t), sigma^2 I)`` errors around the deterministic path."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if sol is None:
        sol = ode_mod.solve_dagger(net, theta, x0, float(data.times[-1]), h)
    resid = data.states - sol.x[sol.index(data.times)]
    k = resid.size
    return float(-0.5 * k * np.log(2 * np.pi * sigma**2) - 0.5 * np.sum(resid**2) / sigma**2)


@dataclass(frozen=True)
class BinomialObservation:
    """``y`` positives out of ``n`` tests at time ``t``."""

    t: float
    n: int
    y: int

    def __post_init__(self):
        if self.n < 0 or self.y < 0 or self.y > self.n:
            raise ValueError(f"need 0 <= y <= n, got y={self.y}, n={self.n}")


def infected_fraction(states: np.ndarray, classes=("S", "E", "I"), names=("S", "E", "I")) -> np.ndarray:
    """``I / (S + E + I)`` along the last axis."""
    S, E, I = (states[..., names.index(c)] for c in classes)
    return I / (S + E + I)


def mc_binomial_loglik(jg: JgdlaDistribution, obs, L: int = 1000, seed=None, z=None,
                       return_info: bool = False):
    """Monte Carlo log likelihood of binomial test counts given latent SEIR states.

    Averages ``prod_t Binom(y_t; n_t, P_l(t))`` over ``L`` joint draws, where
    ``P_l(t) = I/(S+E+I)`` is clamped to ``[1e-9, 1 - 1e-9]``; the average is
    formed with log-sum-exp over per-draw log products.
    """
    if L < 1:
        raise ValueError("L must be at least 1")
    obs = list(obs)
    t = np.array([o.t for o in obs], dtype=float)
    n = np.array([o.n for o in obs], dtype=float)
    y = np.array([o.y for o in obs], dtype=float)
    try:
        k = time_indices(jg.times, t)
    except DimensionMismatch as exc:
        raise DimensionMismatch(f"distribution does not cover every observation time: {exc}") from exc
    draws = sample_joint(jg, L, seed=seed, z=z)[:, k, :]
    raw = infected_fraction(draws, names=jg.class_names)
    P = np.clip(np.nan_to_num(raw, nan=P_CLAMP), P_CLAMP, 1 - P_CLAMP)
    clamped = int(np.sum(P != raw))
    log_comb = gammaln(n + 1) - gammaln(y + 1) - gammaln(n - y + 1)
    per_draw = np.sum(log_comb + y * np.log(P) + (n - y) * np.log1p(-P), axis=1)
    value = float(logsumexp(per_draw) - np.log(L))
    if not np.isfinite(value):
        log.warning("%s: every Monte Carlo draw underflowed (%d clamps)",
                    AllSamplesDegenerate.__name__, clamped)
        value = DEGENERATE_LOGLIK
    if return_info:
        return value, {"clamped": clamped}
    return value
