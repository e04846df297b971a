"""Maximum likelihood fits for directly observed population paths."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import jgdla, ode as ode_mod
from ..model import ReactionNetwork, Trajectory
from .likelihoods import det_model_loglik
from .optimize import NelderMeadConfig, nelder_mead, wald_intervals_log


@dataclass(frozen=True)
class FitResult:
    names: tuple[str, ...]
    estimate: np.ndarray
    loglik: float
    ci_low: np.ndarray
    ci_high: np.ndarray
    converged: bool
    n_eval: int

    def as_dict(self) -> dict:
        return {
            "theta_hat": dict(zip(self.names, self.estimate.tolist())),
            "ci_low": dict(zip(self.names, self.ci_low.tolist())),
            "ci_high": dict(zip(self.names, self.ci_high.tolist())),
            "loglik": self.loglik,
            "converged": self.converged,
        }

    def covers(self, truth) -> bool:
        truth = np.asarray(truth, dtype=float)
        k = truth.size
        return bool(np.all((self.ci_low[:k] <= truth) & (truth <= self.ci_high[:k])))


def fit_jgdla(net: ReactionNetwork, obs: Trajectory, x0, N: float, theta0=None,
              h: float = ode_mod.DEFAULT_H, cfg: NelderMeadConfig | None = None) -> FitResult:
    """Maximize the joint normal likelihood over log rates; Wald intervals at the optimum."""
    theta0 = np.ones(len(net.param_names)) if theta0 is None else np.asarray(theta0, dtype=float)

    def nll(log_theta):
        return -jgdla.jgdla_loglik(net, np.exp(log_theta), x0, obs, N, h)

    res = nelder_mead(nll, np.log(theta0), cfg)
    lo, hi, _ = wald_intervals_log(nll, res.x)
    return FitResult(net.param_names, np.exp(res.x), -res.fun, lo, hi, res.converged, res.n_eval)


def fit_det_model(net: ReactionNetwork, obs: Trajectory, x0, theta0=None,
                  h: float = ode_mod.DEFAULT_H, cfg: NelderMeadConfig | None = None) -> FitResult:
    """Fit rates and a common error scale ``sigma`` around the deterministic path."""
    theta0 = np.ones(len(net.param_names)) if theta0 is None else np.asarray(theta0, dtype=float)
    t_end = float(obs.times[-1])

    def nll(z):
        theta, sigma = np.exp(z[:-1]), np.exp(z[-1])
        return -det_model_loglik(net, theta, sigma, obs, x0, h)

    sol = ode_mod.solve_dagger(net, theta0, x0, t_end, h)
    rms = np.sqrt(np.mean((obs.states - sol.x[sol.index(obs.times)]) ** 2))
    start = np.append(np.log(theta0), np.log(max(rms, 1e-6)))
    res = nelder_mead(nll, start, cfg)
    lo, hi, _ = wald_intervals_log(nll, res.x)
    names = net.param_names + ("sigma",)
    return FitResult(names, np.exp(res.x), -res.fun, lo, hi, res.converged, res.n_eval)


def sigma_mle(net: ReactionNetwork, theta, obs: Trajectory, x0, h: float = ode_mod.DEFAULT_H) -> float:
    """Closed-form error scale for fixed rates: RMS of the residuals."""
    sol = ode_mod.solve_dagger(net, theta, x0, float(obs.times[-1]), h)
    resid = obs.states - sol.x[sol.index(obs.times)]
    return float(np.sqrt(np.mean(resid**2)))
