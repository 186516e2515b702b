import numpy as np
import pytest

from main.core.exceptions import SingularNormalEquations
from main.core.inner_solver import (
    ProximalTerm,
    gn_normal_matrix,
    inner_objective,
    lm_solve,
    solve_symmetric,
)
from main.core.options import Damping, InnerMethod, InnerSolverOptions
from main.core.problems import LinearMap, make_phase_retrieval, make_simple_1d


def test_linear_weighted_least_squares_matches_closed_form(random_linear):
    map, y = random_linear(0)
    w = np.linspace(0.5, 2.0, map.dim_out)
    result = lm_solve(map, y, w, np.zeros(map.dim_in))
    a = map.matrix
    expected = np.linalg.solve(a.T @ (a * w[:, None]), a.T @ (w * y))
    assert result.converged
    np.testing.assert_allclose(result.x, expected, rtol=1e-8, atol=1e-10)


@pytest.mark.parametrize("method", list(InnerMethod))
def test_objective_trace_is_monotone(method):
    map = make_phase_retrieval(3, 10, 5)
    rng = np.random.default_rng(5)
    y = map.eval(rng.standard_normal(3)) + 0.1 * rng.standard_normal(10)
    w = rng.uniform(0.5, 1.5, 10)
    x0 = rng.standard_normal(3)
    result = lm_solve(map, y, w, x0, opts=InnerSolverOptions(method=method))
    trace = np.array(result.trace)
    assert np.all(np.diff(trace) <= 8 * np.finfo(float).eps * np.abs(trace[:-1]))
    assert inner_objective(map, result.x, y, w) <= inner_objective(map, x0, y, w)


def test_diagonal_damping_reaches_the_same_point():
    map = make_simple_1d()
    y = np.array([0.0, 0.9])
    w = np.ones(2)
    identity = lm_solve(map, y, w, [0.9])
    diagonal = lm_solve(map, y, w, [0.9], opts=InnerSolverOptions(damping=Damping.DIAGONAL))
    # critical point x^2 = 0.4 of x^2 + (x^2 - 0.9)^2
    assert identity.x[0] == pytest.approx(np.sqrt(0.4), abs=1e-8)
    assert diagonal.x[0] == pytest.approx(np.sqrt(0.4), abs=1e-8)


def test_proximal_term_pulls_toward_center():
    map = LinearMap(np.eye(2))
    y = np.array([1.0, -1.0])
    center = np.zeros(2)
    result = lm_solve(map, y, np.ones(2), center, ProximalTerm(omega=0.5, center=center))
    # minimizer of 1/2 ||x - y||^2 + 0.5 ||x||^2
    np.testing.assert_allclose(result.x, y / 2.0, atol=1e-9)
    matrix, rhs = gn_normal_matrix(map, center, y, np.ones(2), ProximalTerm(omega=0.5, center=center))
    np.testing.assert_allclose(matrix, 2.0 * np.eye(2))
    np.testing.assert_allclose(rhs, y)


def test_solve_symmetric_ridge_retry():
    # positive semidefinite with a zero eigenvalue in one direction
    matrix = np.array([[1.0, 1.0], [1.0, 1.0]])
    x = solve_symmetric(matrix, np.array([2.0, 2.0]))
    np.testing.assert_allclose(matrix @ x, [2.0, 2.0], rtol=1e-6)
    with pytest.raises(SingularNormalEquations):
        solve_symmetric(np.zeros((2, 2)), np.ones(2))


def test_negative_omega_rejected():
    with pytest.raises(ValueError):
        ProximalTerm(omega=-1.0)


def test_zero_gradient_start_is_converged():
    map = make_simple_1d()
    result = lm_solve(map, [0.0, 0.9], np.ones(2), [0.0])
    assert result.converged
    assert result.x[0] == 0.0
    assert len(result.trace) == 1
