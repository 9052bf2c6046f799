from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridest import linalg
from gridest.errors import DimensionMismatch, SingularKkt, SingularMatrix


def test_solve_linear_matches_reference():
    rng = np.random.default_rng(0)
    for _ in range(10):
        a = rng.standard_normal((12, 12)) + 12.0 * np.eye(12)
        b = rng.standard_normal(12)
        x = linalg.solve_linear(a, b)
        assert np.abs(a @ x - b).max() <= 1e-9 * (1.0 + np.abs(b).max())


def test_solve_linear_backward_error_on_ill_conditioned_system():
    # Hilbert matrix, condition number ~ 1e10 at n = 8; plain LU alone
    # would miss the backward error bound without the refinement step.
    n = 8
    a = 1.0 / (np.arange(n)[:, None] + np.arange(n)[None, :] + 1.0)
    b = np.ones(n)
    x = linalg.solve_linear(a, b)
    assert np.abs(a @ x - b).max() <= 1e-9 * (1.0 + np.abs(b).max())


def test_solve_linear_rejects_singular_matrix():
    a = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(SingularMatrix):
        linalg.solve_linear(a, np.ones(2))


def test_solve_linear_dimension_errors():
    with pytest.raises(DimensionMismatch):
        linalg.solve_linear(np.ones((2, 3)), np.ones(2))
    with pytest.raises(DimensionMismatch):
        linalg.solve_linear(np.eye(2), np.ones(3))
    with pytest.raises(ValueError):
        linalg.solve_linear(np.array([[np.nan, 0.0], [0.0, 1.0]]), np.ones(2))


def test_symmetric_factor_indefinite_system():
    rng = np.random.default_rng(1)
    q, _ = np.linalg.qr(rng.standard_normal((9, 9)))
    eig = np.array([-4.0, -2.0, -1.0, -0.5, 0.3, 1.0, 2.0, 3.0, 5.0])
    m = q @ np.diag(eig) @ q.T
    m = 0.5 * (m + m.T)
    factor = linalg.SymmetricFactor(m)
    for _ in range(3):
        b = rng.standard_normal(9)
        x = factor.solve(b)
        assert np.abs(m @ x - b).max() <= 1e-10 * (1.0 + np.abs(b).max())


def test_symmetric_factor_rejects_singular_matrix():
    m = np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(SingularMatrix):
        linalg.SymmetricFactor(m)


def test_solve_kkt_hand_example():
    # minimize d^T d + (2, 0)^T d subject to d_1 + d_2 = 0:
    # elimination gives step (-1/2, 1/2) and multiplier -1.
    system = linalg.KktSystem(
        hessian=2.0 * np.eye(2),
        constraint_jacobian=np.array([[1.0, 1.0]]),
        gradient=np.array([2.0, 0.0]),
        residual=np.zeros(1),
    )
    sol = linalg.solve_kkt(system)
    assert not sol.regularized
    assert np.allclose(sol.step, [-0.5, 0.5], atol=1e-12)
    assert np.allclose(sol.multipliers, [-1.0], atol=1e-12)


def test_solve_kkt_residual_shifts_the_step():
    # Same system with constraint residual 1 forces d_1 + d_2 = -1.
    system = linalg.KktSystem(
        hessian=2.0 * np.eye(2),
        constraint_jacobian=np.array([[1.0, 1.0]]),
        gradient=np.array([2.0, 0.0]),
        residual=np.array([1.0]),
    )
    sol = linalg.solve_kkt(system)
    assert abs(sol.step.sum() + 1.0) <= 1e-12


def test_solve_kkt_without_constraints_is_a_newton_step():
    h = np.diag([2.0, 8.0])
    g = np.array([4.0, -8.0])
    system = linalg.KktSystem(
        hessian=h,
        constraint_jacobian=np.zeros((0, 2)),
        gradient=g,
        residual=np.zeros(0),
    )
    sol = linalg.solve_kkt(system)
    assert np.allclose(sol.step, [-2.0, 1.0], atol=1e-12)
    assert sol.multipliers.size == 0


def test_solve_kkt_ridge_recovers_a_singular_hessian_block():
    # Zero Hessian with one constraint row: the bordered matrix has an
    # exactly zero pivot until the ridge fills the unconstrained direction.
    system = linalg.KktSystem(
        hessian=np.zeros((2, 2)),
        constraint_jacobian=np.array([[1.0, 0.0]]),
        gradient=np.array([0.0, 0.0]),
        residual=np.array([1.0]),
    )
    with pytest.warns(UserWarning):
        sol = linalg.solve_kkt(system)
    assert sol.regularized
    assert abs(sol.step[0] + 1.0) <= 1e-9


def test_solve_kkt_raises_when_ridge_cannot_help():
    # Duplicated constraint rows stay linearly dependent no matter what
    # is added to the Hessian block.
    system = linalg.KktSystem(
        hessian=np.zeros((2, 2)),
        constraint_jacobian=np.array([[1.0, 0.0], [1.0, 0.0]]),
        gradient=np.zeros(2),
        residual=np.zeros(2),
    )
    with pytest.warns(UserWarning):
        with pytest.raises(SingularKkt):
            linalg.solve_kkt(system)


def test_kkt_system_validation():
    with pytest.raises(ValueError):
        linalg.KktSystem(
            hessian=np.array([[1.0, 2.0], [0.0, 1.0]]),
            constraint_jacobian=np.zeros((0, 2)),
            gradient=np.zeros(2),
            residual=np.zeros(0),
        )
    with pytest.raises(DimensionMismatch):
        linalg.KktSystem(
            hessian=np.eye(2),
            constraint_jacobian=np.zeros((1, 3)),
            gradient=np.zeros(2),
            residual=np.zeros(1),
        )
    with pytest.raises(DimensionMismatch):
        linalg.KktSystem(
            hessian=np.eye(2),
            constraint_jacobian=np.zeros((1, 2)),
            gradient=np.zeros(2),
            residual=np.zeros(2),
        )


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=2, max_value=8), st.integers(min_value=0, max_value=2**31 - 1))
def test_solve_kkt_stationarity_and_feasibility(n, seed):
    """Post-condition of the solver: both KKT residuals below 1e-8."""
    rng = np.random.default_rng(seed)
    root = rng.standard_normal((n + 2, n))
    h = root.T @ root + 0.1 * np.eye(n)
    m = rng.integers(0, n)
    j = rng.standard_normal((m, n))
    g = rng.standard_normal(n)
    r = rng.standard_normal(m)
    system = linalg.KktSystem(hessian=h, constraint_jacobian=j, gradient=g, residual=r)
    sol = linalg.solve_kkt(system)
    stationarity = h @ sol.step + g + j.T @ sol.multipliers
    feasibility = j @ sol.step + r
    assert np.abs(stationarity).max(initial=0.0) <= 1e-8
    assert np.abs(feasibility).max(initial=0.0) <= 1e-8
