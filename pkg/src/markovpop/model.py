"""Reaction-network population models.

A network tracks ``d`` classes as proportions of a population of size ``N``
and fires ``n`` reactions. Reaction ``i`` changes the class counts by the
integer vector ``R_i`` and occurs at per-capita-scaled rate
``lambda_i(x, theta, t)`` evaluated on proportions. Counts enter only through
simulation and the ``1/N`` covariance scaling.

All rate callables here broadcast over leading axes: ``x`` has shape
``(..., d)`` and the returned rates have shape ``(..., n)``.
"""
from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonFiniteRate, NonMonotoneTime

# negative rates above this are treated as roundoff and clamped to zero
ROUNDOFF_TOL = 1e-12
FD_STEP = 1e-6

RateFn = Callable[[np.ndarray, np.ndarray, "float | np.ndarray"], np.ndarray]


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous piecewise-constant function of time.

    ``values[k]`` applies on ``[breakpoints[k-1], breakpoints[k])`` with
    ``values[0]`` on ``(-inf, breakpoints[0])``.
    """

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.breakpoints) + 1:
            raise ValueError("need exactly one more value than breakpoints")
        if any(b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if any(v < 0 for v in self.values):
            raise ValueError("step function values must be nonnegative")

    @classmethod
    def constant(cls, value: float) -> "StepFunction":
        return cls((), (float(value),))

    def __call__(self, t):
        idx = np.searchsorted(self.breakpoints, t, side="right")
        out = np.asarray(self.values, dtype=float)[idx]
        return out if np.ndim(out) else float(out)


@dataclass(frozen=True, eq=False)
class ReactionNetwork:
    """Population model defined by reaction vectors and rate functions.

    Parameters
    ----------
    class_names : sequence of str
        Labels of the ``d`` tracked classes.
    param_names : sequence of str
        Labels of the rate parameters, in the order of ``theta``.
    reactions : array_like, shape (n, d)
        Integer stoichiometry; row ``i`` is ``R_i``.
    rates : callable or sequence of callables
        Either one function ``(x, theta, t) -> (..., n)`` or ``n`` functions
        ``(x, theta, t) -> (...)``, one per reaction.
    jacobian : callable, optional
        Analytic ``(x, theta, t) -> (..., d, d)`` Jacobian of the drift.
        Central finite differences are used when absent.
    breakpoints : sequence of float
        Times at which the rates jump (time-varying inputs). Exact
        simulation restarts its clock at these times.
    """

    class_names: tuple[str, ...]
    param_names: tuple[str, ...]
    reactions: np.ndarray
    rates: RateFn
    jacobian_fn: RateFn | None = None
    breakpoints: tuple[float, ...] = ()
    name: str = "custom"
    inputs: dict = field(default_factory=dict, repr=False)
    _stacked: bool = field(default=False, repr=False)

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.reactions))
        if not np.all(R == np.round(R)):
            raise ValueError("reaction vectors must be integer valued")
        R = R.astype(float)
        R.setflags(write=False)
        object.__setattr__(self, "reactions", R)
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "param_names", tuple(self.param_names))
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        if R.shape[1] != len(self.class_names):
            raise DimensionMismatch(
                f"reactions have {R.shape[1]} columns but {len(self.class_names)} classes"
            )
        if np.any(np.all(R == 0, axis=1)):
            raise ValueError("every reaction vector needs a nonzero entry")
        if isinstance(self.rates, Sequence):
            fns = tuple(self.rates)
            if len(fns) != R.shape[0]:
                raise DimensionMismatch(f"{len(fns)} rate functions for {R.shape[0]} reactions")

            def stacked(x, theta, t, _fns=fns):
                return np.stack(
                    [np.broadcast_to(f(x, theta, t), np.shape(x)[:-1]) for f in _fns], axis=-1
                )

            object.__setattr__(self, "rates", stacked)
            object.__setattr__(self, "_stacked", True)

    @property
    def d(self) -> int:
        return self.reactions.shape[1]

    @property
    def n(self) -> int:
        return self.reactions.shape[0]

    def __repr__(self):
        return f"ReactionNetwork({self.name!r}, classes={self.class_names}, n={self.n})"


def propensities(net: ReactionNetwork, x, theta, t=0.0, clamp: str = "roundoff") -> np.ndarray:
    """Evaluate all reaction rates at ``x``.

    ``clamp="roundoff"`` zeroes negatives down to ``-1e-12`` and raises
    below that; ``clamp="zero"`` zeroes every negative rate, which is the
    policy for Euler-Maruyama states that have left the simplex.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(net.rates(x, np.asarray(theta, dtype=float), t), dtype=float)
    if lam.shape[-1] != net.n:
        raise DimensionMismatch(f"rate function returned {lam.shape[-1]} rates, expected {net.n}")
    low = lam.min()
    if low >= 0:  # fast path; False for NaN
        return lam
    if not np.all(np.isfinite(lam)):
        raise NonFiniteRate(f"non-finite rate at x={x}")
    if low < 0:
        if clamp == "roundoff" and np.any(lam < -ROUNDOFF_TOL):
            raise NonFiniteRate(f"negative rate {lam.min():.3g} at x={x}")
        lam = np.maximum(lam, 0.0)
    return lam


def drift(net: ReactionNetwork, x, theta, t=0.0, clamp: str = "roundoff") -> np.ndarray:
    """``F(x) = sum_i R_i lambda_i(x)``, shape ``(..., d)``."""
    return propensities(net, x, theta, t, clamp) @ net.reactions


def diffusion_factor(net: ReactionNetwork, x, theta, t=0.0, clamp: str = "roundoff") -> np.ndarray:
    """``Q`` with column ``i`` equal to ``R_i sqrt(lambda_i)``, shape ``(..., d, n)``."""
    lam = propensities(net, x, theta, t, clamp)
    return net.reactions.T * np.sqrt(lam)[..., None, :]


def diffusion_cov(net: ReactionNetwork, x, theta, t=0.0, clamp: str = "roundoff") -> np.ndarray:
    """``Sigma = Q Q' = sum_i lambda_i R_i R_i'``, shape ``(..., d, d)``."""
    lam = propensities(net, x, theta, t, clamp)
    R = net.reactions
    return np.einsum("...i,ij,ik->...jk", lam, R, R)


def jacobian(net: ReactionNetwork, x, theta, t=0.0) -> np.ndarray:
    """Jacobian of the drift, analytic when the network provides one."""
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if net.jacobian_fn is not None:
        return np.asarray(net.jacobian_fn(x, theta, t), dtype=float)
    return fd_jacobian(net, x, theta, t)


def fd_jacobian(net: ReactionNetwork, x, theta, t=0.0, step: float = FD_STEP) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    J = np.empty(x.shape + (net.d,))
    for k in range(net.d):
        e = np.zeros(net.d)
        e[k] = step
        # rates may dip below zero at the simplex boundary; the finite
        # difference needs the raw polynomial, not the clamped value
        fp = np.asarray(net.rates(x + e, theta, t)) @ net.reactions
        fm = np.asarray(net.rates(x - e, theta, t)) @ net.reactions
        J[..., :, k] = (fp - fm) / (2 * step)
    return J


# -- presets ---------------------------------------------------------------

def _sir_rates(x, theta, t):
    S, I = x[..., 0], x[..., 1]
    beta, gamma = theta[0], theta[1]
    return np.stack([beta * S * I, gamma * I], axis=-1)


def _sir_jacobian(x, theta, t):
    S, I = x[..., 0], x[..., 1]
    beta, gamma = theta[0], theta[1]
    return np.stack(
        [
            np.stack([-beta * I, -beta * S], axis=-1),
            np.stack([beta * I, beta * S - gamma], axis=-1),
        ],
        axis=-2,
    )


def build_sir() -> ReactionNetwork:
    """Closed-population SIR with ``theta = (beta, gamma)``; R is implicit."""
    return ReactionNetwork(
        class_names=("S", "I"),
        param_names=("beta", "gamma"),
        reactions=[[-1, 1], [0, -1]],
        rates=_sir_rates,
        jacobian_fn=_sir_jacobian,
        name="sir",
    )


def build_seir(mu_s: StepFunction | float = 0.0) -> ReactionNetwork:
    """SEIR with removal of susceptibles at the time-varying hazard ``mu_s``.

    Classes are ``(S, E, I)`` and ``theta = (beta, alpha, gamma)``. The four
    reactions are infection, susceptible removal, onset of infectiousness,
    and recovery.
    """
    if not isinstance(mu_s, StepFunction):
        mu_s = StepFunction.constant(mu_s)

    def rates(x, theta, t):
        S, E, I = x[..., 0], x[..., 1], x[..., 2]
        beta, alpha, gamma = theta[0], theta[1], theta[2]
        mu = mu_s(t)
        return np.stack(
            [beta * I * S, mu * S, alpha * E, gamma * I], axis=-1
        )

    def jac(x, theta, t):
        S, E, I = x[..., 0], x[..., 1], x[..., 2]
        beta, alpha, gamma = theta[0], theta[1], theta[2]
        mu = mu_s(t)
        zero = np.zeros_like(S)
        return np.stack(
            [
                np.stack([-(beta * I + mu), zero, -beta * S], axis=-1),
                np.stack([beta * I, zero - alpha, beta * S], axis=-1),
                np.stack([zero, zero + alpha, zero - gamma], axis=-1),
            ],
            axis=-2,
        )

    return ReactionNetwork(
        class_names=("S", "E", "I"),
        param_names=("beta", "alpha", "gamma"),
        reactions=[[-1, 1, 0], [-1, 0, 0], [0, -1, 1], [0, 0, -1]],
        rates=rates,
        jacobian_fn=jac,
        breakpoints=mu_s.breakpoints,
        name="seir",
        inputs={"mu_s": mu_s},
    )


# -- trajectories ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-stamped class proportions, simulated or observed.

    ``states`` has shape ``(T, d)``. ``flags`` carries per-path diagnostics
    such as ``left_simplex`` for Euler-Maruyama output.
    """

    times: np.ndarray
    states: np.ndarray
    class_names: tuple[str, ...]
    N: int | None = None
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if times.ndim != 1 or states.shape[0] != times.size:
            raise DimensionMismatch("need one state row per time")
        if states.shape[1] != len(self.class_names):
            raise DimensionMismatch("state width does not match class_names")
        if np.any(np.diff(times) <= 0):
            raise NonMonotoneTime("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    def __len__(self):
        return self.times.size

    def column(self, name: str) -> np.ndarray:
        return self.states[:, self.class_names.index(name)]

    def at(self, times) -> "Trajectory":
        """Rows at the given times, which must be present exactly."""
        idx = time_indices(self.times, times)
        return Trajectory(self.times[idx], self.states[idx], self.class_names, self.N)


def time_indices(grid, times, tol: float = 1e-9) -> np.ndarray:
    """Indices of ``times`` in the sorted array ``grid``; raises if absent."""
    grid = np.asarray(grid, dtype=float)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    idx = np.clip(np.searchsorted(grid, times), 0, grid.size - 1)
    lower = np.clip(idx - 1, 0, grid.size - 1)
    pick = np.where(np.abs(grid[lower] - times) < np.abs(grid[idx] - times), lower, idx)
    bad = np.abs(grid[pick] - times) > tol
    if np.any(bad):
        raise DimensionMismatch(f"times {times[bad].tolist()} are not on the grid")
    return pick
