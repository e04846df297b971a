"""Euler-Maruyama likelihood on a time lattice with latent infill states.

One lattice step of length ``dt`` is the Gaussian transition

    X(t + dt) | X(t) ~ N(X(t) + F(X(t)) dt, dt * Sigma(X(t)) / N),

with ``Sigma = sum_i lambda_i R_i R_i'``. The ``independent`` variant keeps
only the diagonal of ``Sigma``. States at unobserved lattice times are
latent and sampled jointly with the rates.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateCovariance, DimensionMismatch, MarkovPopError
from .inference.mcmc import MHConfig, PosteriorChain, metropolis
from .inference.optimize import nelder_mead
from .inference.priors import Prior
from .linalg import LOG_2PI
from .model import ReactionNetwork, Trajectory, diffusion_cov, drift, time_indices

COV_JITTER = 1e-12
VARIANTS = ("full", "independent")


def transition_moments(net: ReactionNetwork, theta, x_from, dt: float, N: float,
                       variant: str = "full", t=0.0):
    """Mean and covariance of one Euler-Maruyama step; batched over leading axes."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    x_from = np.asarray(x_from, dtype=float)
    mean = x_from + drift(net, x_from, theta, t, clamp="zero") * dt
    cov = diffusion_cov(net, x_from, theta, t, clamp="zero") * (dt / N)
    if variant == "independent":
        cov = cov * np.eye(net.d)
    return mean, cov


def _logdensities(net, theta, x_from, x_to, dt, N, variant, t=0.0):
    mean, cov = transition_moments(net, theta, x_from, dt, N, variant, t)
    diag = np.diagonal(cov, axis1=-2, axis2=-1)
    if np.any(np.all(diag <= 0, axis=-1)):
        bad = np.flatnonzero(np.all(np.atleast_2d(diag) <= 0, axis=-1))
        raise DegenerateCovariance(
            f"all rates vanish at {bad.size} transition(s), first at index {bad[0]}"
        )
    # a zero rate leaves Sigma rank deficient; floor it
    cov = cov + COV_JITTER * np.eye(net.d) * np.any(diag <= 0, axis=-1, keepdims=True)[..., None]
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        cov = cov + COV_JITTER * np.eye(net.d)
        L = np.linalg.cholesky(cov)
    r = np.asarray(x_to, dtype=float) - mean
    z = np.linalg.solve(L, r[..., None])[..., 0]
    logdet = 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)
    return -0.5 * (net.d * LOG_2PI + logdet + np.sum(z**2, axis=-1))


def em_transition_logdensity(net: ReactionNetwork, theta, x_from, x_to, dt: float, N: float,
                             variant: str = "full", t=0.0) -> float:
    """Log density of one Euler-Maruyama step from ``x_from`` to ``x_to``.

    Raises :class:`DegenerateCovariance` when every rate vanishes at
    ``x_from``; the step is then deterministic.
    """
    return float(_logdensities(net, theta, x_from, x_to, dt, N, variant, t))


@dataclass(frozen=True, eq=False)
class EmLattice:
    """Uniform lattice holding observed states and current latent values.

    ``values`` has shape ``(K+1, d)``; rows where ``obs_mask`` is false are
    latent. The latent vector is ordered time-major, class-minor.
    """

    dt: float
    times: np.ndarray
    obs_mask: np.ndarray
    values: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        K = self.times.size - 1
        if abs(K * self.dt - (self.times[-1] - self.times[0])) > 1e-9:
            raise ValueError("lattice span is not a multiple of dt")
        if self.values.shape != (self.times.size, len(self.class_names)):
            raise DimensionMismatch("values must have one row per lattice time")

    @classmethod
    def from_observations(cls, obs: Trajectory, dt: float, t_end: float | None = None) -> "EmLattice":
        """Lattice from 0 to ``t_end`` with latent rows linearly interpolated."""
        t_end = float(obs.times[-1]) if t_end is None else t_end
        K = int(round(t_end / dt))
        if abs(K * dt - t_end) > 1e-9:
            raise ValueError("t_end must be a multiple of dt")
        times = np.round(np.arange(K + 1) * dt, 12)
        idx = time_indices(times, obs.times)
        if idx[0] != 0:
            raise ValueError("the initial state must be observed")
        mask = np.zeros(times.size, dtype=bool)
        mask[idx] = True
        values = np.column_stack(
            [np.interp(times, obs.times, obs.states[:, j]) for j in range(obs.states.shape[1])]
        )
        values[idx] = obs.states
        return cls(dt, times, mask, values, obs.class_names)

    @property
    def latent_times(self) -> np.ndarray:
        return self.times[~self.obs_mask]

    @property
    def latent(self) -> np.ndarray:
        return self.values[~self.obs_mask].ravel()

    def with_latent(self, latent) -> "EmLattice":
        values = self.values.copy()
        values[~self.obs_mask] = np.asarray(latent, dtype=float).reshape(-1, values.shape[1])
        return replace(self, values=values)

    def latent_names(self) -> list[str]:
        return [f"latent_{k}" for k in range(self.latent.size)]


def lattice_loglik(net: ReactionNetwork, theta, lattice: EmLattice, N: float,
                   variant: str = "full") -> float:
    """Sum of transition log densities over consecutive lattice pairs."""
    v = lattice.values
    try:
        return float(np.sum(_logdensities(net, theta, v[:-1], v[1:], lattice.dt, N, variant,
                                          lattice.times[:-1])))
    except DegenerateCovariance as exc:
        raise DegenerateCovariance(f"lattice: {exc}") from exc


def em_mh_sampler(net: ReactionNetwork, data: Trajectory, N: float, dt: float = 1.0,
                  priors=None, cfg: MHConfig | None = None, variant: str = "full",
                  prop_sd_theta: float = 0.02, prop_sd_latent: float = 0.005,
                  t_end: float | None = None, theta0=None) -> PosteriorChain:
    """All-at-once random-walk Metropolis over log rates and latent states.

    Rates are proposed on the log scale with the Jacobian term added to
    the target; priors are half-normal(1) by default. Latent states that
    leave ``[0, 1]`` or whose classes sum above 1 have zero posterior
    density. The chain starts from linearly interpolated latent states and
    the rates maximizing the lattice likelihood given them.
    """
    cfg = cfg or MHConfig()
    p = len(net.param_names)
    priors = priors or [Prior.half_normal(1.0)] * p
    lattice = EmLattice.from_observations(data, dt, t_end)
    n_lat = lattice.latent.size

    def logpost(z):
        log_theta, lat = z[:p], z[p:]
        if np.any(lat < 0) or np.any(lat > 1):
            return -np.inf
        cand = lattice.with_latent(lat)
        if np.any(cand.values.sum(axis=1) > 1):
            return -np.inf
        theta = np.exp(log_theta)
        lp = sum(pr.logpdf(th) for pr, th in zip(priors, theta)) + np.sum(log_theta)
        if not np.isfinite(lp):
            return -np.inf
        try:
            return lp + lattice_loglik(net, theta, cand, N, variant)
        except MarkovPopError:
            return -np.inf

    if theta0 is None:
        start = nelder_mead(
            lambda lt: -lattice_loglik(net, np.exp(lt), lattice, N, variant), np.zeros(p)
        ).x
    else:
        start = np.log(np.asarray(theta0, dtype=float))
    z0 = np.concatenate([start, lattice.latent])
    sd = np.concatenate([np.full(p, prop_sd_theta), np.full(n_lat, prop_sd_latent)])

    def to_natural(z):
        out = z.copy()
        out[:, :p] = np.exp(out[:, :p])
        return out

    chain = metropolis(logpost, z0, sd, cfg, net.param_names + tuple(lattice.latent_names()),
                       to_natural=to_natural)
    chain.meta.update(
        variant=variant,
        dt=dt,
        latent_times=lattice.latent_times.tolist(),
        class_names=list(net.class_names),
    )
    return chain


def latent_draws(chain: PosteriorChain, n_classes: int) -> np.ndarray:
    """Latent columns reshaped to ``(S, n_latent_times, d)``."""
    cols = [k for k, n in enumerate(chain.names) if n.startswith("latent_")]
    return chain.samples[:, cols].reshape(chain.samples.shape[0], -1, n_classes)


def em_mape(chain: PosteriorChain, truth: Trajectory, pred_times, infected: str = "I") -> float:
    """Posterior-averaged absolute error of the infected class, averaged over ``pred_times``."""
    names = tuple(chain.meta.get("class_names", truth.class_names))
    lat_times = np.asarray(chain.meta["latent_times"], dtype=float)
    draws = latent_draws(chain, len(names))
    k = time_indices(lat_times, pred_times)
    j = names.index(infected)
    true_i = truth.at(pred_times).column(infected)
    return float(np.mean(np.mean(np.abs(draws[:, k, j] - true_i), axis=0)))
