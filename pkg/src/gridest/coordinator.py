"""Coupled consensus step of the distributed estimator.

The coordinator receives per-region Gauss-Newton sensitivities and solves
one coupled equality-constrained QP over all region steps:

    min   sum_i ||B_i dy_i||^2 + 2 dy_i^T (B_i^T b_i)
    s.t.  sum_i A_i (y_i + dy_i) = 0        (consensus, multiplier lam)
          C_i dy_i = 0 for every region     (linearized physics)

The QP keeps each step inside the tangent space of its region's power flow
manifold while restoring consensus across the auxiliary pairs.  It is
solved as a single bordered KKT factorization; if the Gauss-Newton Hessian
is singular on the constraint null space the ridge fallback of the linear
algebra kernel engages and the solution is flagged as regularized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import DimensionMismatch


@dataclass(frozen=True)
class SensitivityUpload:
    """Per-region payload sent to the coordinator each outer iteration.

    fit_hessian is B_i^T B_i (transmitted packed, it is symmetric),
    fit_gradient is B_i^T b_i, constraint_jacobian is C_i evaluated at the
    region solution, coupling_image is A_i y_i.
    """

    region: int
    fit_hessian: np.ndarray
    fit_gradient: np.ndarray
    constraint_jacobian: np.ndarray
    coupling_image: np.ndarray

    def float_count(self) -> int:
        """Floats on the wire: packed symmetric Hessian, dense rest."""
        n = self.fit_hessian.shape[0]
        return n * (n + 1) // 2 + self.constraint_jacobian.size + self.fit_gradient.size + self.coupling_image.size


@dataclass
class ConsensusSolution:
    steps: list[np.ndarray]
    lam: np.ndarray
    kappas: list[np.ndarray]
    regularized: bool

    def float_count(self, region: int) -> int:
        """Download payload for one region: lam plus its own step."""
        return self.lam.size + self.steps[region].size


def solve_consensus(
    uploads: list[SensitivityUpload], couplings: list[np.ndarray]
) -> ConsensusSolution:
    """Solve the coupled QP and split the solution back per region."""
    if len(uploads) != len(couplings):
        raise DimensionMismatch(f"{len(uploads)} uploads for {len(couplings)} coupling matrices")
    if not uploads:
        raise DimensionMismatch("no regions")
    n_coupling = couplings[0].shape[0]
    sizes = []
    con_sizes = []
    for up, a in zip(uploads, couplings):
        n_i = up.fit_hessian.shape[0]
        if up.fit_hessian.shape != (n_i, n_i):
            raise DimensionMismatch(f"region {up.region}: fit Hessian is not square")
        if up.fit_gradient.shape != (n_i,):
            raise DimensionMismatch(f"region {up.region}: gradient length mismatch")
        if up.constraint_jacobian.shape[1] != n_i:
            raise DimensionMismatch(f"region {up.region}: constraint Jacobian column mismatch")
        if a.shape != (n_coupling, n_i):
            raise DimensionMismatch(f"region {up.region}: coupling matrix shape {a.shape}")
        if up.coupling_image.shape != (n_coupling,):
            raise DimensionMismatch(f"region {up.region}: coupling image length mismatch")
        sizes.append(n_i)
        con_sizes.append(up.constraint_jacobian.shape[0])

    n_total = sum(sizes)
    m_total = sum(con_sizes)
    hessian = np.zeros((n_total, n_total))
    gradient = np.zeros(n_total)
    jac = np.zeros((m_total + n_coupling, n_total))
    offset = 0
    con_offset = 0
    for up, a, n_i, m_i in zip(uploads, couplings, sizes, con_sizes):
        hessian[offset : offset + n_i, offset : offset + n_i] = 2.0 * up.fit_hessian
        gradient[offset : offset + n_i] = 2.0 * up.fit_gradient
        jac[con_offset : con_offset + m_i, offset : offset + n_i] = up.constraint_jacobian
        jac[m_total : m_total + n_coupling, offset : offset + n_i] = a
        offset += n_i
        con_offset += m_i
    gap = np.sum([up.coupling_image for up in uploads], axis=0)
    residual = np.concatenate([np.zeros(m_total), gap])

    sol = linalg.solve_kkt(
        linalg.KktSystem(
            hessian=hessian, constraint_jacobian=jac, gradient=gradient, residual=residual
        )
    )
    steps = []
    kappas = []
    offset = 0
    con_offset = 0
    for n_i, m_i in zip(sizes, con_sizes):
        steps.append(sol.step[offset : offset + n_i])
        kappas.append(sol.multipliers[con_offset : con_offset + m_i])
        offset += n_i
        con_offset += m_i
    lam = sol.multipliers[m_total:]
    return ConsensusSolution(steps=steps, lam=lam, kappas=kappas, regularized=sol.regularized)
