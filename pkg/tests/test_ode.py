import numpy as np
import pytest
from scipy.linalg import expm

from markovpop.errors import SingularFundamental, StepDiverged
from markovpop.model import ReactionNetwork, build_sir
from markovpop.ode import cumulative_trapezoid, make_grid, quad_trapezoid, solve, solve_dagger

from conftest import SIR_THETA, SIR_X0

FROZEN_A = np.array([[-0.025, -0.475], [0.025, 0.325]])


def linear_network(A):
    """Frozen Jacobian ``A`` on a path that does not move."""
    A = np.asarray(A, dtype=float)
    return ReactionNetwork(("a", "b"), ("p",), [[1, 0], [0, 1]],
                           lambda x, th, t: np.zeros(x.shape),
                           jacobian_fn=lambda x, th, t: np.broadcast_to(A, x.shape[:-1] + (2, 2)))


def decay_network(rate=0.15):
    return ReactionNetwork(("x",), ("g",), [[-1]], lambda x, th, t: th[0] * x,
                           jacobian_fn=lambda x, th, t: -th[0] * np.ones(x.shape[:-1] + (1, 1)))


def test_zero_drift_is_constant():
    net = ReactionNetwork(("x",), ("c",), [[-1]], lambda x, th, t: th[0] * x)
    sol = solve(net, [0.0], [0.4], 5.0, 0.1)
    np.testing.assert_array_equal(sol.x, 0.4)
    np.testing.assert_array_equal(sol.U, 1.0)


def test_scalar_decay_closed_form():
    sol = solve_dagger(decay_network(), [0.15], [1.0], 10.0, 0.01)
    assert abs(sol.x[-1, 0] - np.exp(-1.5)) < 1e-8


def test_sir_peak_matches_fine_step():
    coarse = solve_dagger(build_sir(), SIR_THETA, SIR_X0, 10.0, 0.01)
    fine = solve_dagger(build_sir(), SIR_THETA, SIR_X0, 10.0, 1e-4)
    t_c = coarse.grid[np.argmax(coarse.x[:, 1])]
    t_f = fine.grid[np.argmax(fine.x[:, 1])]
    assert abs(t_c - t_f) < 0.05
    i = solve_dagger(build_sir(), SIR_THETA, SIR_X0, 30.0, 0.01).x[:, 1]
    k = np.argmax(i)
    assert 0 < k < i.size - 1 and np.all(np.diff(i[: k + 1]) > 0) and np.all(np.diff(i[k:]) < 0)


def test_rk4_order():
    ref = solve_dagger(build_sir(), SIR_THETA, SIR_X0, 10.0, 1e-3).x[-1]
    errs = [np.max(np.abs(solve_dagger(build_sir(), SIR_THETA, SIR_X0, 10.0, h).x[-1] - ref))
            for h in (0.2, 0.1)]
    assert 3.5 <= np.log2(errs[0] / errs[1]) <= 4.5


def test_dense_output_midpoints():
    h = 0.02
    sol = solve_dagger(build_sir(), SIR_THETA, SIR_X0, 10.0, h)
    half = solve_dagger(build_sir(), SIR_THETA, SIR_X0, 10.0, h / 2)
    mids = sol.grid[:-1] + h / 2
    np.testing.assert_allclose(sol.x_at(mids), half.x[1::2], atol=1e-7)
    np.testing.assert_allclose(sol.midpoints(), sol.x_at(mids), atol=1e-15)


def test_fundamental_identity_for_zero_jacobian():
    sol = solve(linear_network(np.zeros((2, 2))), [1.0], [0.3, 0.3], 3.0, 0.1)
    np.testing.assert_array_equal(sol.U, np.broadcast_to(np.eye(2), sol.U.shape))


def test_fundamental_matches_expm():
    sol = solve(linear_network(FROZEN_A), [1.0], [0.5, 0.1], 5.0, 0.01)
    assert np.max(np.abs(sol.U[-1] - expm(5.0 * FROZEN_A))) < 1e-6


def test_inverse_and_liouville():
    sol = solve(build_sir(), SIR_THETA, SIR_X0, 30.0, 0.01)
    np.testing.assert_allclose(sol.U @ sol.U_inv, np.broadcast_to(np.eye(2), sol.U.shape), atol=1e-8)
    from markovpop.model import jacobian

    tr = np.trace(jacobian(sol.net, sol.x, SIR_THETA), axis1=1, axis2=2)
    liouville = np.exp(cumulative_trapezoid(tr, 0.01))
    np.testing.assert_allclose(np.linalg.det(sol.U), liouville, rtol=1e-5)


def test_diverging_state_raises():
    net = ReactionNetwork(("x",), ("g",), [[1]], lambda x, th, t: th[0] * x)
    with pytest.raises(StepDiverged):
        solve_dagger(net, [2.0], [1.0], 5.0, 0.1)


def test_singular_fundamental_raises():
    net = ReactionNetwork(("x",), ("g",), [[-1]], lambda x, th, t: th[0] * x,
                          jacobian_fn=lambda x, th, t: -th[0] * np.ones(x.shape[:-1] + (1, 1)))
    with pytest.raises(SingularFundamental):
        solve(net, [40.0], [1.0], 1.0, 0.01)


def test_grid_validation():
    with pytest.raises(ValueError):
        make_grid(1.05, 0.1)
    assert make_grid(1.0, 0.1)[-1] == 1.0


def test_quadrature():
    grid = make_grid(10.0, 0.01)
    assert quad_trapezoid(np.ones_like(grid), grid, 0.0, 5.0) == pytest.approx(5.0, abs=1e-12)
    assert quad_trapezoid(grid, grid, 0.0, 10.0) == pytest.approx(50.0, abs=1e-10)
    g1 = make_grid(1.0, 0.01)
    assert abs(quad_trapezoid(np.exp(g1), g1, 0.0, 1.0) - (np.e - 1)) < 2e-5


def test_input_jump_on_grid_is_exact():
    from markovpop.model import StepFunction, build_seir

    # susceptibles removed only on [1, 2): S(3) = S(0) exp(-rate) when nothing else happens
    net = build_seir(StepFunction((1.0, 2.0), (0.0, 0.3, 0.0)))
    sol = solve_dagger(net, [0.0, 1.0, 1.0], [0.8, 0.0, 0.0], 3.0, 0.1)
    assert abs(sol.x[-1, 0] - 0.8 * np.exp(-0.3)) < 1e-8
