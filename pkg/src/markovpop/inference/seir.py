"""SEIR fit to binomial test counts through the joint normal of the latent states."""
from __future__ import annotations

import numpy as np

from .. import jgdla, ode as ode_mod
from ..errors import MarkovPopError
from ..model import ReactionNetwork
from .likelihoods import mc_binomial_loglik
from .mcmc import MHConfig, PosteriorChain, metropolis
from .priors import Prior

PARAM_NAMES = ("beta", "alpha", "gamma", "S0", "I0")


def default_priors() -> dict[str, Prior]:
    inf = np.inf
    return {
        "beta": Prior.truncated_normal(0.0, inf, 0.0, 15.0),
        "alpha": Prior.truncated_normal(0.0, inf, 0.0, 15.0),
        "gamma": Prior.truncated_normal(0.0, inf, 0.0, 0.3),
        "S0": Prior.truncated_normal(0.0, 1.0, 0.0, 0.3),
        "I0": Prior.truncated_normal(0.0, 1.0, 0.0, 0.1),
    }


def initial_state(S0: float, I0: float) -> np.ndarray:
    """``(S, E, I)`` at time 0 with nobody removed yet."""
    return np.array([S0, 1.0 - S0 - I0, I0])


class SeirPosterior:
    """Log posterior over ``(log beta, log alpha, log gamma, S0, I0)``.

    Every call draws a fresh Monte Carlo estimate of the likelihood; the
    joint normal for the most recent parameter vectors is cached so that
    re-evaluating the current state costs only the draws.
    """

    def __init__(self, net: ReactionNetwork, data, N: float, priors=None, L: int = 1000,
                 h: float = 0.1, t_end: float | None = None, seed=0):
        self.net = net
        self.data = list(data)
        self.N = N
        self.priors = priors or default_priors()
        self.L = L
        self.h = h
        self.times = np.array([o.t for o in self.data], dtype=float)
        self.t_end = float(self.times[-1]) if t_end is None else t_end
        self.rng = np.random.Generator(np.random.Philox(seed))
        self._cache: dict[bytes, jgdla.JgdlaDistribution] = {}
        self.clamped = 0

    def distribution(self, theta, S0, I0) -> jgdla.JgdlaDistribution:
        key = np.concatenate([theta, [S0, I0]]).tobytes()
        dist = self._cache.get(key)
        if dist is None:
            dist = jgdla.build(self.net, theta, initial_state(S0, I0), self.times, self.N,
                               self.h, self.t_end)
            if len(self._cache) >= 4:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = dist
        return dist

    def log_prior(self, theta, S0, I0) -> float:
        vals = dict(zip(PARAM_NAMES, [*theta, S0, I0]))
        return float(sum(self.priors[k].logpdf(v) for k, v in vals.items()))

    def __call__(self, z) -> float:
        log_theta, S0, I0 = z[:3], z[3], z[4]
        if not (S0 > 0 and I0 > 0 and S0 + I0 < 1):
            return -np.inf
        theta = np.exp(log_theta)
        lp = self.log_prior(theta, S0, I0) + float(np.sum(log_theta))
        if not np.isfinite(lp):
            return -np.inf
        try:
            dist = self.distribution(theta, S0, I0)
        except MarkovPopError:
            return -np.inf
        ll, info = mc_binomial_loglik(dist, self.data, self.L, self.rng, return_info=True)
        self.clamped += info["clamped"]
        return lp + ll


def seir_mh_sampler(net: ReactionNetwork, data, N: float, priors=None, cfg: MHConfig | None = None,
                    L: int = 1000, h: float = 0.1, start=(1.0, 0.5, 0.5, 0.5, 0.05),
                    prop_sd=(0.1, 0.1, 0.1, 0.02, 0.02), t_end: float | None = None) -> PosteriorChain:
    """All-at-once Metropolis over SEIR rates and initial proportions.

    ``start`` is ``(beta, alpha, gamma, S0, I0)``. Rates move on the log
    scale, the initial proportions on their natural scale; ``E0`` is
    ``1 - S0 - I0``.
    """
    cfg = cfg or MHConfig()
    target = SeirPosterior(net, data, N, priors, L, h, t_end, seed=cfg.seed + 1)
    start = np.asarray(start, dtype=float)
    z0 = np.concatenate([np.log(start[:3]), start[3:]])

    def to_natural(z):
        out = z.copy()
        out[:, :3] = np.exp(out[:, :3])
        return out

    chain = metropolis(target, z0, np.asarray(prop_sd, dtype=float), cfg, PARAM_NAMES,
                       to_natural=to_natural, refresh=True)
    chain.meta["clamp_events"] = target.clamped
    chain.meta["L"] = L
    chain.meta["h"] = h
    return chain
