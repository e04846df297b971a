"""Joint Gaussian approximation of a population process at chosen times.

Around the deterministic path ``x(t)`` the scaled fluctuation
``V = sqrt(N) (X_N - x)`` solves the linear SDE

    dV = J(x(t)) V dt + Q(x(t)) dB,       V(0) = 0.

Writing ``V = U Y`` with ``dU/dt = J U``, ``U(0) = I`` gives
``U dY = Q dB``, so ``Y(t) = int_0^t U^{-1}(s) Q(s) dB(s)``. By the Ito
isometry ``Y`` has independent increments and

    Cov Y(t)[j, k] = sum_i int_0^t a_ij(s) a_ik(s) lambda_i(x(s)) ds,
    a_i(s) = U^{-1}(s) R_i.

For ``s <= t``, ``Cov(X_N(s), X_N(t)) = U(s) Cov Y(s) U(t)' / N``; stacking
these blocks over the requested times gives the joint covariance. No path
of ``V`` is ever simulated.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ode as ode_mod
from .errors import DimensionMismatch
from .linalg import cholesky_jitter, mvn_condition, mvn_logpdf
from .model import ReactionNetwork, Trajectory, propensities, time_indices


@dataclass(frozen=True, eq=False)
class JgdlaDistribution:
    """Normal law of the stacked states at ``times`` (time-major layout).

    ``mean`` has length ``T*d`` with block ``k`` holding the deterministic
    state at ``times[k]``. ``chol`` factors ``cov + jitter*I``.
    """

    times: np.ndarray
    class_names: tuple[str, ...]
    N: float
    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray
    jitter: float
    asymmetry: float = 0.0
    cov_y_blocks: np.ndarray | None = None
    U_at_obs: np.ndarray | None = None
    ode: ode_mod.OdeSolution | None = field(default=None, repr=False)

    @property
    def d(self) -> int:
        return len(self.class_names)

    @property
    def mean_states(self) -> np.ndarray:
        return self.mean.reshape(-1, self.d)

    def block(self, k: int, l: int) -> np.ndarray:
        d = self.d
        return self.cov[k * d : (k + 1) * d, l * d : (l + 1) * d]

    def to_json(self) -> dict:
        return {
            "times": self.times.tolist(),
            "class_names": list(self.class_names),
            "N": self.N,
            "mean": self.mean.tolist(),
            "cov": self.cov.ravel().tolist(),
            "jitter": self.jitter,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "JgdlaDistribution":
        times = np.asarray(payload["times"], dtype=float)
        mean = np.asarray(payload["mean"], dtype=float)
        cov = np.asarray(payload["cov"], dtype=float).reshape(mean.size, mean.size)
        jitter = float(payload.get("jitter", 0.0))
        chol = np.linalg.cholesky(cov + jitter * np.eye(mean.size))
        return cls(times, tuple(payload["class_names"]), payload["N"], mean, cov, chol, jitter)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> "JgdlaDistribution":
        return cls.from_json(json.loads(Path(path).read_text()))


def cov_y_path(sol: ode_mod.OdeSolution) -> np.ndarray:
    """``Cov Y`` at every grid point, shape ``(M+1, d, d)``.

    Trapezoid on the ODE grid; each interval uses the rate at its left end
    and the left limit at its right end, so input jumps on grid points are
    integrated exactly.
    """
    if sol.U_inv is None:
        sol = ode_mod.solve_fundamental(sol)
    net, theta, grid = sol.net, sol.theta, sol.grid
    A = np.einsum("sjk,ik->sij", sol.U_inv, net.reactions)  # a_i(s), shape (M+1, n, d)
    lam_start = propensities(net, sol.x[:-1], theta, grid[:-1])
    lam_end = propensities(net, sol.x[1:], theta, np.nextafter(grid[1:], -np.inf))
    g_start = np.einsum("si,sij,sik->sjk", lam_start, A[:-1], A[:-1])
    g_end = np.einsum("si,sij,sik->sjk", lam_end, A[1:], A[1:])
    out = np.zeros((grid.size, net.d, net.d))
    np.cumsum(0.5 * sol.h * (g_start + g_end), axis=0, out=out[1:])
    return 0.5 * (out + np.swapaxes(out, 1, 2))


def cov_y(sol: ode_mod.OdeSolution, t: float) -> np.ndarray:
    """``Cov Y(t)`` for a grid time ``t``."""
    k = sol.index([t])[0]
    return cov_y_path(sol)[k]


def assemble_sigma(sol: ode_mod.OdeSolution, times, N: float, _cov_y=None) -> JgdlaDistribution:
    """Joint normal of the states at ``times`` for population size ``N``."""
    if N < 1:
        raise ValueError("population size must be at least 1")
    if sol.U is None:
        sol = ode_mod.solve_fundamental(sol)
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) <= 0):
        raise DimensionMismatch("times must be a nonempty strictly increasing sequence")
    idx = sol.index(times)
    cy = (cov_y_path(sol) if _cov_y is None else _cov_y)[idx]
    U = sol.U[idx]
    T, d = idx.size, sol.net.d
    W = U @ cy  # U(t_k) CovY(t_k)
    pairs = np.einsum("kab,lcb->klac", W, U)  # U(t_k) CovY(t_k) U(t_l)'
    upper = np.triu(np.ones((T, T), dtype=bool))[:, :, None, None]
    full = np.where(upper, pairs, np.swapaxes(np.swapaxes(pairs, 0, 1), 2, 3))
    cov = full.transpose(0, 2, 1, 3).reshape(T * d, T * d) / N
    asym = float(np.max(np.abs(cov - cov.T)))
    cov = 0.5 * (cov + cov.T)
    chol, jitter = cholesky_jitter(cov)
    return JgdlaDistribution(
        times=times,
        class_names=sol.net.class_names,
        N=N,
        mean=sol.x[idx].ravel(),
        cov=cov,
        chol=chol,
        jitter=jitter,
        asymmetry=asym,
        cov_y_blocks=cy,
        U_at_obs=U,
        ode=sol,
    )


def build(net: ReactionNetwork, theta, x0, times, N: float, h: float = ode_mod.DEFAULT_H,
          t_end: float | None = None) -> JgdlaDistribution:
    """Deterministic path, fundamental matrix, ``Cov Y`` integrals, joint covariance."""
    times = np.asarray(times, dtype=float)
    t_end = float(times[-1]) if t_end is None else t_end
    sol = ode_mod.solve_dagger(net, theta, x0, t_end, h)
    sol = ode_mod.solve_fundamental(sol)
    return assemble_sigma(sol, times, N)


def loglik(dist: JgdlaDistribution, obs: Trajectory) -> float:
    """Joint log density of observed states."""
    if obs.states.shape != (dist.times.size, dist.d):
        raise DimensionMismatch(
            f"observations have shape {obs.states.shape}, expected {(dist.times.size, dist.d)}"
        )
    if np.max(np.abs(obs.times - dist.times)) > 1e-9:
        raise DimensionMismatch("observation times differ from the distribution's times")
    return mvn_logpdf(obs.states.ravel(), dist.mean, dist.chol)


def jgdla_loglik(net: ReactionNetwork, theta, x0, obs: Trajectory, N: float,
                 h: float = ode_mod.DEFAULT_H) -> float:
    return loglik(build(net, theta, x0, obs.times, N, h), obs)


@dataclass(frozen=True)
class Prediction:
    times: np.ndarray
    mean: np.ndarray  # (P, d)
    cov: np.ndarray  # (P*d, P*d)

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0, None)).reshape(self.mean.shape)


def condition_on(dist: JgdlaDistribution, obs: Trajectory) -> Prediction:
    """Condition a joint distribution on observations at a subset of its times."""
    if obs.states.shape[1] != dist.d:
        raise DimensionMismatch("observation width does not match the distribution")
    k_obs = time_indices(dist.times, obs.times)
    free_t = np.setdiff1d(np.arange(dist.times.size), k_obs)
    d = dist.d
    obs_idx = (k_obs[:, None] * d + np.arange(d)).ravel()
    m, c = mvn_condition(dist.mean, dist.cov, obs_idx, obs.states.ravel())
    return Prediction(dist.times[free_t], m.reshape(-1, d), c)


def predict_conditional(dist: JgdlaDistribution, obs: Trajectory, pred_times) -> Prediction:
    """Conditional normal of the states at ``pred_times`` given ``obs``."""
    if dist.ode is None:
        raise ValueError("distribution carries no ODE solution; use condition_on")
    pred_times = np.atleast_1d(np.asarray(pred_times, dtype=float))
    if np.intersect1d(np.round(pred_times, 9), np.round(obs.times, 9)).size:
        raise DimensionMismatch("prediction times overlap observation times")
    all_times = np.union1d(obs.times, pred_times)
    joint = assemble_sigma(dist.ode, all_times, dist.N)
    return condition_on(joint, obs)


def sample_joint(dist: JgdlaDistribution, n_samples: int, seed=None, z=None) -> np.ndarray:
    """Draws of the stacked states, shape ``(n_samples, T, d)``.

    ``z`` overrides the standard normal innovations (shape
    ``(n_samples, T*d)``).
    """
    if z is None:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.Philox(seed))
        z = rng.standard_normal((n_samples, dist.mean.size))
    draws = dist.mean + np.asarray(z) @ dist.chol.T
    return draws.reshape(n_samples, dist.times.size, dist.d)
