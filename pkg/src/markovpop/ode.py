"""Fixed-step RK4 for the deterministic limit and its fundamental matrix.

The state path solves ``dx/dt = F(x)`` on a uniform grid and keeps the
derivatives needed for cubic Hermite dense output. The fundamental matrix
solves ``dU/dt = J(x(t)) U`` with ``U(0) = I``; the Jacobian is evaluated on
the Hermite interpolant at the RK4 stage times. Because the fundamental
system is linear, every RK4 step is a matrix ``M_k`` with
``U_{k+1} = M_k U_k``; all ``M_k`` are built in one vectorized pass.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import SingularFundamental, StepDiverged
from .model import ReactionNetwork, drift, jacobian, time_indices

DEFAULT_H = 0.01
DIVERGENCE_NORM = 10.0
DET_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class OdeSolution:
    """Deterministic path and fundamental matrix on a uniform grid.

    Attributes
    ----------
    grid : ndarray, shape (M+1,)
    x : ndarray, shape (M+1, d)
        Deterministic state at each grid point.
    f_start, f_end : ndarray, shape (M, d)
        Drift at the left end of each step and the left limit at its right
        end; they differ only when an input jumps at a grid point.
    U, U_inv : ndarray, shape (M+1, d, d) or None
        Filled in by :func:`solve_fundamental`.
    """

    net: ReactionNetwork
    theta: np.ndarray
    grid: np.ndarray
    h: float
    x: np.ndarray
    f_start: np.ndarray
    f_end: np.ndarray
    U: np.ndarray | None = None
    U_inv: np.ndarray | None = None

    @property
    def t_end(self) -> float:
        return float(self.grid[-1])

    def index(self, times) -> np.ndarray:
        return time_indices(self.grid, times)

    def x_at(self, t) -> np.ndarray:
        """Cubic Hermite dense output at arbitrary times in ``[0, t_end]``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < -1e-12) or np.any(t > self.t_end + 1e-12):
            raise ValueError("time outside the solved interval")
        k = np.clip(np.floor(t / self.h + 1e-9).astype(int), 0, self.grid.size - 2)
        s = ((t - self.grid[k]) / self.h)[:, None]
        x0, x1 = self.x[k], self.x[k + 1]
        f0, f1 = self.f_start[k], self.f_end[k]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return h00 * x0 + h10 * self.h * f0 + h01 * x1 + h11 * self.h * f1

    def midpoints(self) -> np.ndarray:
        """Hermite interpolant at every step midpoint, shape ``(M, d)``."""
        return 0.5 * (self.x[:-1] + self.x[1:]) + self.h / 8 * (self.f_start - self.f_end)


def make_grid(t_end: float, h: float) -> np.ndarray:
    if h <= 0 or t_end <= 0:
        raise ValueError("need h > 0 and t_end > 0")
    M = int(round(t_end / h))
    if abs(M * h - t_end) > 1e-9:
        raise ValueError(f"t_end={t_end} is not a multiple of h={h}")
    # rounding keeps grid points that should be integers exactly integral,
    # so jumps in piecewise-constant inputs land on step boundaries
    return np.round(np.arange(M + 1) * h, 12)


def _left(t):
    return np.nextafter(t, -np.inf)


def solve_dagger(net: ReactionNetwork, theta, x0, t_end: float, h: float = DEFAULT_H) -> OdeSolution:
    """Classic RK4 on ``dx/dt = F(x, t)``.

    The last stage of each step sees the left limit of the step's end time
    so right-continuous inputs stay constant within a step.
    """
    theta = np.asarray(theta, dtype=float)
    grid = make_grid(t_end, h)
    x = np.empty((grid.size, net.d))
    x[0] = np.asarray(x0, dtype=float)
    cur = x[0]
    for k in range(grid.size - 1):
        t = grid[k]
        k1 = drift(net, cur, theta, t)
        k2 = drift(net, cur + 0.5 * h * k1, theta, t + 0.5 * h)
        k3 = drift(net, cur + 0.5 * h * k2, theta, t + 0.5 * h)
        k4 = drift(net, cur + h * k3, theta, _left(grid[k + 1]))
        cur = cur + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(cur)) or np.linalg.norm(cur) > DIVERGENCE_NORM:
            raise StepDiverged(f"state norm exceeded {DIVERGENCE_NORM} at t={grid[k + 1]:g}")
        x[k + 1] = cur
    f_start = drift(net, x[:-1], theta, grid[:-1])
    f_end = drift(net, x[1:], theta, _left(grid[1:]))
    return OdeSolution(net, theta, grid, h, x, f_start, f_end)


def step_propagators(sol: OdeSolution) -> np.ndarray:
    """RK4 step matrices ``M_k`` for ``dU/dt = J(x(t)) U``, shape ``(M, d, d)``."""
    net, theta, grid, h = sol.net, sol.theta, sol.grid, sol.h
    eye = np.eye(net.d)
    J0 = jacobian(net, sol.x[:-1], theta, grid[:-1])
    Jm = jacobian(net, sol.midpoints(), theta, grid[:-1] + 0.5 * h)
    J1 = jacobian(net, sol.x[1:], theta, _left(grid[1:]))
    K1 = J0
    K2 = Jm @ (eye + 0.5 * h * K1)
    K3 = Jm @ (eye + 0.5 * h * K2)
    K4 = J1 @ (eye + h * K3)
    return eye + h / 6.0 * (K1 + 2 * K2 + 2 * K3 + K4)


def solve_fundamental(sol: OdeSolution) -> OdeSolution:
    """Attach ``U`` and its per-grid-point inverse to a solved path."""
    steps = step_propagators(sol)
    d = sol.net.d
    U = np.empty((sol.grid.size, d, d))
    U[0] = np.eye(d)
    for k in range(steps.shape[0]):
        U[k + 1] = steps[k] @ U[k]
    det = np.linalg.det(U)
    if np.any(~np.isfinite(det)) or np.any(np.abs(det) <= DET_FLOOR):
        k = int(np.argmin(np.abs(np.nan_to_num(det))))
        raise SingularFundamental(f"|det U| = {abs(det[k]):.3g} at t={sol.grid[k]:g}")
    U_inv = np.linalg.inv(U)
    return replace(sol, U=U, U_inv=U_inv)


def solve(net: ReactionNetwork, theta, x0, t_end: float, h: float = DEFAULT_H) -> OdeSolution:
    """Deterministic path followed by its fundamental matrix."""
    return solve_fundamental(solve_dagger(net, theta, x0, t_end, h))


def cumulative_trapezoid(values, h: float) -> np.ndarray:
    """Running composite trapezoid integral on a uniform grid, starting at 0.

    ``values`` has the grid along axis 0; the output has the same shape.
    """
    values = np.asarray(values, dtype=float)
    out = np.zeros_like(values)
    np.cumsum(0.5 * h * (values[1:] + values[:-1]), axis=0, out=out[1:])
    return out


def quad_trapezoid(values, grid, a: float, b: float) -> float | np.ndarray:
    """Composite trapezoid of grid samples between grid points ``a`` and ``b``."""
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    ia, ib = time_indices(grid, [a, b])
    if ib < ia:
        return -quad_trapezoid(values, grid, b, a)
    seg = values[ia : ib + 1]
    dt = np.diff(grid[ia : ib + 1]).reshape((-1,) + (1,) * (seg.ndim - 1))
    return np.sum(0.5 * dt * (seg[1:] + seg[:-1]), axis=0)
