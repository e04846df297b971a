"""Random-walk Metropolis with a diagonal Gaussian proposal."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..errors import ChainDiverged

DIVERGENCE_WINDOW = 10_000
DIVERGENCE_RATE = 0.001


@dataclass(frozen=True)
class MHConfig:
    n_iter: int = 100_000
    burn_in: int = 10_000
    seed: int = 0
    tune: bool = True
    target_acceptance: tuple[float, float] = (0.15, 0.40)
    pilot_length: int = 500
    max_pilot_rounds: int = 20


@dataclass(eq=False)
class PosteriorChain:
    """Retained draws on the natural scale plus acceptance bookkeeping.

    ``accepted`` covers every iteration of the main run, burn-in included;
    ``samples`` and ``logposts`` cover only the retained iterations.
    """

    names: tuple[str, ...]
    samples: np.ndarray
    logposts: np.ndarray
    accepted: np.ndarray
    seed: int
    burn_in: int
    proposal_scale: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted)) if self.accepted.size else 0.0

    def column(self, name: str) -> np.ndarray:
        return self.samples[:, self.names.index(name)]

    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    def summary(self, names=None) -> dict:
        names = self.names if names is None else names
        cols = [self.names.index(n) for n in names]
        s = self.samples[:, cols]
        lo, hi = np.percentile(s, [2.5, 97.5], axis=0)
        return {
            "posterior_mean": dict(zip(names, s.mean(axis=0).tolist())),
            "ci_low": dict(zip(names, lo.tolist())),
            "ci_high": dict(zip(names, hi.tolist())),
            "acceptance_rate": self.acceptance_rate,
            "n_retained": int(s.shape[0]),
            "burn_in": self.burn_in,
            "seed": self.seed,
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("iter",) + tuple(self.names))
            for k, row in enumerate(self.samples):
                w.writerow([self.burn_in + k] + [f"{v:.17g}" for v in row])


def _run(logpost, x, lp, sd, n, rng, refresh, keep_from=0, chunk=10_000):
    """Plain RW-Metropolis sweep.

    Returns the final state, the states and log posteriors from iteration
    ``keep_from`` on, and accept flags for every iteration.
    """
    dim = x.size
    xs = np.empty((max(n - keep_from, 0), dim))
    lps = np.empty(max(n - keep_from, 0))
    acc = np.zeros(n, dtype=bool)
    for c0 in range(0, n, chunk):
        m = min(chunk, n - c0)
        steps = rng.standard_normal((m, dim)) * sd
        logu = np.log(rng.random(m))
        for j in range(m):
            if refresh:
                lp = logpost(x)
            prop = x + steps[j]
            lp_prop = logpost(prop)
            if lp_prop - lp > logu[j]:
                x, lp = prop, lp_prop
                acc[c0 + j] = True
            k = c0 + j - keep_from
            if k >= 0:
                xs[k] = x
                lps[k] = lp
    return x, lp, xs, lps, acc


def tune_scale(logpost, x0, prop_sd, rng, cfg: MHConfig, refresh: bool = False):
    """Pilot runs that rescale the proposal until acceptance lands in the target band."""
    x = np.asarray(x0, dtype=float)
    lp = logpost(x)
    scale = 1.0
    lo, hi = cfg.target_acceptance
    if not np.any(np.asarray(prop_sd) > 0):
        return scale, x, lp
    for _ in range(cfg.max_pilot_rounds):
        x, lp, _, _, acc = _run(
            logpost, x, lp, scale * prop_sd, cfg.pilot_length, rng, refresh, cfg.pilot_length
        )
        rate = acc.mean()
        if lo <= rate <= hi:
            break
        # acceptance falls roughly like exp(-c * scale^2) in high dimension
        scale *= 0.5 if rate < lo else 1.6
    return scale, x, lp


def metropolis(logpost, x0, prop_sd, cfg: MHConfig, names, to_natural=None,
               refresh: bool = False, rng=None) -> PosteriorChain:
    """Random-walk Metropolis on ``logpost`` over a sampling-space vector.

    ``to_natural`` maps sampling-space draws (e.g. log rates) to the stored
    representation. With ``refresh=True`` the current state's target is
    re-evaluated every iteration, which suits Monte Carlo likelihoods that
    are redrawn on each call.
    """
    rng = rng or np.random.Generator(np.random.Philox(cfg.seed))
    prop_sd = np.asarray(prop_sd, dtype=float)
    x = np.asarray(x0, dtype=float)
    if cfg.tune:
        scale, x, lp = tune_scale(logpost, x, prop_sd, rng, cfg, refresh)
    else:
        scale, lp = 1.0, logpost(x)
    if not np.isfinite(lp):
        raise ValueError("log posterior is not finite at the starting point")
    total = cfg.burn_in + cfg.n_iter
    x, lp, kept, lps, acc = _run(logpost, x, lp, scale * prop_sd, total, rng, refresh, cfg.burn_in)
    for start in range(0, total - DIVERGENCE_WINDOW + 1, DIVERGENCE_WINDOW):
        rate = acc[start : start + DIVERGENCE_WINDOW].mean()
        if rate < DIVERGENCE_RATE:
            raise ChainDiverged(
                f"acceptance {rate:.4g} over iterations {start}-{start + DIVERGENCE_WINDOW}"
            )
    if to_natural is not None:
        kept = to_natural(kept)
    return PosteriorChain(
        names=tuple(names),
        samples=kept,
        logposts=lps,
        accepted=acc,
        seed=cfg.seed,
        burn_in=cfg.burn_in,
        proposal_scale=scale,
    )
