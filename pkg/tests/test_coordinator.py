from __future__ import annotations

import numpy as np
import pytest

from gridest import coordinator
from gridest.errors import DimensionMismatch


def _upload(region, rng, n, m, n_coupling):
    root = rng.standard_normal((n + 2, n))
    return coordinator.SensitivityUpload(
        region=region,
        fit_hessian=root.T @ root + 0.5 * np.eye(n),
        fit_gradient=rng.standard_normal(n),
        constraint_jacobian=rng.standard_normal((m, n)),
        coupling_image=rng.standard_normal(n_coupling),
    )


def test_consensus_solution_matches_a_hand_assembled_system():
    """Assemble the full coordination KKT matrix directly with numpy blocks
    and compare every returned piece against its exact solve."""
    rng = np.random.default_rng(42)
    n1, n2, m1, m2, nc = 4, 3, 2, 1, 2
    up1 = _upload(0, rng, n1, m1, nc)
    up2 = _upload(1, rng, n2, m2, nc)
    a1 = rng.standard_normal((nc, n1))
    a2 = rng.standard_normal((nc, n2))

    sol = coordinator.solve_consensus([up1, up2], [a1, a2])

    n = n1 + n2
    m = m1 + m2
    kkt = np.zeros((n + m + nc, n + m + nc))
    kkt[:n1, :n1] = 2.0 * up1.fit_hessian
    kkt[n1:n, n1:n] = 2.0 * up2.fit_hessian
    jac = np.zeros((m + nc, n))
    jac[:m1, :n1] = up1.constraint_jacobian
    jac[m1:m, n1:n] = up2.constraint_jacobian
    jac[m:, :n1] = a1
    jac[m:, n1:] = a2
    kkt[:n, n:] = jac.T
    kkt[n:, :n] = jac
    rhs = np.concatenate([
        -2.0 * up1.fit_gradient,
        -2.0 * up2.fit_gradient,
        np.zeros(m),
        -(up1.coupling_image + up2.coupling_image),
    ])
    direct = np.linalg.solve(kkt, rhs)

    assert np.allclose(np.concatenate(sol.steps), direct[:n], atol=1e-9)
    assert np.allclose(sol.kappas[0], direct[n : n + m1], atol=1e-9)
    assert np.allclose(sol.kappas[1], direct[n + m1 : n + m], atol=1e-9)
    assert np.allclose(sol.lam, direct[n + m :], atol=1e-9)
    assert not sol.regularized


def test_consensus_steps_close_the_gap_within_the_linear_model():
    # Feasibility rows force sum_i A_i (y_i + step_i) = 0 exactly.
    rng = np.random.default_rng(7)
    n1, n2, nc = 5, 4, 3
    up1 = _upload(0, rng, n1, 0, nc)
    up2 = _upload(1, rng, n2, 0, nc)
    up1 = coordinator.SensitivityUpload(
        region=0, fit_hessian=up1.fit_hessian, fit_gradient=up1.fit_gradient,
        constraint_jacobian=np.zeros((0, n1)), coupling_image=up1.coupling_image,
    )
    a1 = rng.standard_normal((nc, n1))
    a2 = rng.standard_normal((nc, n2))
    sol = coordinator.solve_consensus([up1, up2], [a1, a2])
    gap = up1.coupling_image + up2.coupling_image
    closed = gap + a1 @ sol.steps[0] + a2 @ sol.steps[1]
    assert np.abs(closed).max() <= 1e-8


def test_upload_float_count_is_packed_symmetric_plus_dense_rest():
    rng = np.random.default_rng(1)
    n, m, nc = 6, 4, 3
    up = _upload(0, rng, n, m, nc)
    assert up.float_count() == n * (n + 1) // 2 + m * n + n + nc
    # 30-bus sized region: 4 * 12 states, 2 * 12 constraint rows, 16 coupling rows.
    n, m, nc = 48, 24, 16
    up = _upload(0, rng, n, m, nc)
    assert up.float_count() == 48 * 49 // 2 + 24 * 48 + 48 + 16


def test_download_float_count_is_lambda_plus_own_step():
    rng = np.random.default_rng(2)
    up1 = _upload(0, rng, 4, 2, 2)
    up2 = _upload(1, rng, 3, 1, 2)
    sol = coordinator.solve_consensus(
        [up1, up2], [rng.standard_normal((2, 4)), rng.standard_normal((2, 3))]
    )
    assert sol.float_count(0) == 2 + 4
    assert sol.float_count(1) == 2 + 3


def test_dimension_mismatches_are_rejected():
    rng = np.random.default_rng(3)
    up = _upload(0, rng, 4, 2, 2)
    with pytest.raises(DimensionMismatch):
        coordinator.solve_consensus([up], [])
    with pytest.raises(DimensionMismatch):
        coordinator.solve_consensus([], [])
    with pytest.raises(DimensionMismatch):
        coordinator.solve_consensus([up], [rng.standard_normal((2, 5))])
    bad = coordinator.SensitivityUpload(
        region=0,
        fit_hessian=up.fit_hessian,
        fit_gradient=np.zeros(5),
        constraint_jacobian=up.constraint_jacobian,
        coupling_image=up.coupling_image,
    )
    with pytest.raises(DimensionMismatch):
        coordinator.solve_consensus([bad], [rng.standard_normal((2, 4))])
