"""Exact (Gillespie) and Euler-Maruyama path simulation.

Random numbers come from numpy's Philox counter-based generator. Ensemble
members draw from children of ``SeedSequence(seed)`` indexed by path, so
results are independent of execution order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonIntegerCounts, NonFiniteRate
from .model import ROUNDOFF_TOL, ReactionNetwork, Trajectory, diffusion_factor, drift, propensities, time_indices


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def child_seeds(seed, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``record_times`` of ``None`` records every event (Gillespie) or every
    step (Euler-Maruyama).
    """

    N: int
    t_end: float
    seed: int = 0
    record_times: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        if self.N < 1:
            raise ValueError("N must be a positive integer")
        if self.record_times is not None:
            rt = np.asarray(self.record_times, dtype=float)
            if np.any(np.diff(rt) <= 0) or rt[0] < 0 or rt[-1] > self.t_end + 1e-12:
                raise ValueError("record_times must increase strictly within [0, t_end]")
            object.__setattr__(self, "record_times", tuple(float(r) for r in rt))


def integer_counts(x0, N: int) -> np.ndarray:
    scaled = np.asarray(x0, dtype=float) * N
    counts = np.round(scaled)
    if np.max(np.abs(scaled - counts)) > 1e-9:
        raise NonIntegerCounts(f"N*x0 = {scaled} is not integral")
    return counts.astype(np.int64)


def gillespie_path(net: ReactionNetwork, theta, x0, cfg: SimConfig, rng=None) -> Trajectory:
    """Direct-method SSA on counts ``N*x``; returns proportions.

    At a state with rates ``lambda_i(x)`` the total event rate is
    ``N * sum(lambda)``. Recorded snapshots carry the last event at or
    before each record time forward. The clock is restarted at each of the
    network's breakpoints, which is exact for piecewise-constant inputs.
    """
    rng = make_rng(cfg.seed if rng is None else rng)
    theta = np.asarray(theta, dtype=float)
    N = cfg.N
    counts = integer_counts(x0, N)
    R = net.reactions.astype(np.int64)
    pending = [b for b in net.breakpoints if 0 < b < cfg.t_end]
    record = None if cfg.record_times is None else np.asarray(cfg.record_times)

    times, states = [0.0], [counts.copy()]
    snaps = []
    j = 0
    t = 0.0
    uniforms = rng.random(2048)
    u_pos = 0

    while True:
        lam = np.asarray(net.rates(counts / N, theta, t), dtype=float)
        if not lam.min() >= -ROUNDOFF_TOL:  # also catches NaN
            lam = propensities(net, counts / N, theta, t)  # raises with context
        lam = lam.tolist()
        lam_sum = 0.0
        for k in range(len(lam)):
            if lam[k] < 0.0:
                lam[k] = 0.0
            lam_sum += lam[k]
        total = N * lam_sum
        if not total < np.inf:
            raise NonFiniteRate(f"non-finite total rate at t={t:g}")
        next_bp = pending[0] if pending else np.inf
        if total <= 0.0:
            if next_bp < cfg.t_end:
                t = pending.pop(0)
                continue
            break
        if u_pos >= uniforms.size - 1:
            uniforms = rng.random(2048)
            u_pos = 0
        u1, u2 = uniforms[u_pos], uniforms[u_pos + 1]
        u_pos += 2
        t_new = t - np.log1p(-u1) / total
        if t_new >= next_bp:
            # memoryless: discard the draw and restart the clock at the jump
            t = pending.pop(0)
            continue
        if t_new > cfg.t_end:
            break
        if record is not None:
            while j < record.size and record[j] < t_new:
                snaps.append(counts.copy())
                j += 1
        target = u2 * lam_sum
        i, acc = 0, lam[0]
        while acc <= target and i < len(lam) - 1:
            i += 1
            acc += lam[i]
        counts = counts + R[i]
        if counts.min() < 0:
            raise NonFiniteRate(f"reaction {i} drove a count negative at t={t_new:g}")
        t = t_new
        if record is None:
            times.append(t)
            states.append(counts.copy())

    if record is None:
        return Trajectory(np.array(times), np.array(states) / N, net.class_names, N)
    while j < record.size:
        snaps.append(counts.copy())
        j += 1
    return Trajectory(record, np.array(snaps) / N, net.class_names, N)


def em_path(net: ReactionNetwork, theta, x0, dt: float, cfg: SimConfig, rng=None,
            noise: bool = True) -> Trajectory:
    """Euler-Maruyama path of ``dX = F(X) dt + Q(X) dB / sqrt(N)``.

    States are never clamped; rates at states outside the simplex are
    zeroed. ``flags["left_simplex"]`` records whether any state left it.
    ``noise=False`` gives the explicit Euler solution of the ODE.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    rng = make_rng(cfg.seed if rng is None else rng)
    theta = np.asarray(theta, dtype=float)
    K = int(round(cfg.t_end / dt))
    if abs(K * dt - cfg.t_end) > 1e-9:
        raise ValueError("t_end must be a multiple of dt")
    grid = np.round(np.arange(K + 1) * dt, 12)
    x = np.empty((K + 1, net.d))
    x[0] = np.asarray(x0, dtype=float)
    scale = np.sqrt(dt / cfg.N)
    for k in range(K):
        step = x[k] + drift(net, x[k], theta, grid[k], clamp="zero") * dt
        if noise:
            Q = diffusion_factor(net, x[k], theta, grid[k], clamp="zero")
            step = step + scale * (Q @ rng.standard_normal(net.n))
        if not np.all(np.isfinite(step)):
            raise NonFiniteRate(f"Euler-Maruyama state became non-finite at t={grid[k + 1]:g}")
        x[k + 1] = step
    left = bool(np.any(x < 0) or np.any(x > 1) or np.any(x.sum(axis=1) > 1 + 1e-12))
    if cfg.record_times is not None:
        idx = time_indices(grid, cfg.record_times)
        grid, x = grid[idx], x[idx]
    return Trajectory(grid, x, net.class_names, cfg.N, flags={"left_simplex": left})


@dataclass(frozen=True)
class EnsembleStats:
    times: np.ndarray
    mean: np.ndarray  # (T, d)
    cov: np.ndarray  # (T, d, d)
    paths: np.ndarray  # (n_paths, T, d)


def ensemble(net: ReactionNetwork, theta, x0, cfg: SimConfig, n_paths: int,
             method: str = "gillespie", dt: float | None = None, seeds=None) -> EnsembleStats:
    """Sample mean and covariance across independent paths at the record times."""
    if n_paths < 2:
        raise ValueError("need at least two paths")
    if cfg.record_times is None:
        raise ValueError("ensembles need record_times")
    if seeds is None:
        seeds = child_seeds(cfg.seed, n_paths)
    out = np.empty((n_paths, len(cfg.record_times), net.d))
    for p in range(n_paths):
        rng = make_rng(seeds[p])
        try:
            if method == "gillespie":
                traj = gillespie_path(net, theta, x0, cfg, rng)
            elif method == "em":
                traj = em_path(net, theta, x0, dt, cfg, rng)
            else:
                raise ValueError(f"unknown method {method!r}")
        except Exception as exc:
            raise type(exc)(f"path {p}: {exc}") from exc
        out[p] = traj.states
    mean = out.mean(axis=0)
    resid = out - mean
    cov = np.einsum("pti,ptj->tij", resid, resid) / (n_paths - 1)
    return EnsembleStats(np.asarray(cfg.record_times), mean, cov, out)


def poisson_fluctuations(n: int, t: float, n_reps: int, rate: float = 1.0, seed=0) -> np.ndarray:
    """``sqrt(n) * (Y(n*rate*t)/n - rate*t)`` for a unit-rate Poisson process ``Y``.

    Arrival times are built from exponential gaps, in chunks of replicates.
    """
    rng = make_rng(seed)
    horizon = n * rate * t
    width = int(horizon + 8 * np.sqrt(horizon) + 20)
    counts = np.empty(n_reps, dtype=np.int64)
    chunk = max(1, 2_000_000 // width)
    for start in range(0, n_reps, chunk):
        m = min(chunk, n_reps - start)
        arrivals = np.cumsum(rng.exponential(1.0, size=(m, width)), axis=1)
        c = np.sum(arrivals <= horizon, axis=1)
        last = arrivals[:, -1]
        for r in np.flatnonzero(last <= horizon):
            # rare overflow of the preallocated width; extend this row
            s = last[r]
            while s <= horizon:
                s += rng.exponential()
                c[r] += s <= horizon
        counts[start : start + m] = c
    return np.sqrt(n) * (counts / n - rate * t)
