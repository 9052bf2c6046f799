"""Dense direct solvers used everywhere else in the package.

Every system in this project is small (a few hundred rows at the most), so
all routines below are plain O(n^3) dense factorizations.  Square general
systems go through partially pivoted LU.  KKT systems are symmetric but
indefinite, which rules out Cholesky; they are factored once as a whole
bordered matrix with Bunch-Kaufman LDL^T (no Schur complement, so no
assumption that the Hessian block alone is invertible).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, SingularKkt, SingularMatrix

# A pivot below PIVOT_RTOL times the largest absolute entry counts as zero.
PIVOT_RTOL = 1e-14
# Ridge added to the Hessian block when the bordered factorization fails.
RIDGE_SCALE = 1e-9


def solve_linear(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a dense square system with partially pivoted LU.

    One step of iterative refinement keeps the backward error at
    norm(A x - rhs, inf) <= 1e-9 (1 + norm(rhs, inf)) for anything this
    package produces.

    Raises SingularMatrix when a pivot falls below PIVOT_RTOL times the
    largest absolute entry of the matrix.
    """
    a = np.asarray(matrix, dtype=float)
    b = np.asarray(rhs, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"rhs length {b.shape[0]} does not match matrix size {a.shape[0]}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite entries in linear system")
    scale = max(np.abs(a).max(), np.finfo(float).tiny)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a)
    if np.abs(np.diag(lu)).min() <= PIVOT_RTOL * scale:
        raise SingularMatrix("pivot below singularity threshold in LU factorization")
    x = scipy.linalg.lu_solve((lu, piv), b)
    x += scipy.linalg.lu_solve((lu, piv), b - a @ x)
    return x


class SymmetricFactor:
    """Bunch-Kaufman LDL^T factorization of a symmetric indefinite matrix.

    Factor once, solve many right-hand sides.  solve() applies one step of
    iterative refinement against the retained matrix.
    """

    def __init__(self, matrix: np.ndarray):
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
        self.matrix = m
        n = m.shape[0]
        self._lu, self._d, self._perm = scipy.linalg.ldl(m)
        self._tri = self._lu[self._perm, :]
        scale = max(np.abs(m).max(), np.finfo(float).tiny)
        tol = PIVOT_RTOL * scale
        # Walk the block diagonal of D: a nonzero subdiagonal marks a 2x2 block.
        blocks: list[tuple[int, int]] = []
        i = 0
        while i < n:
            if i + 1 < n and self._d[i + 1, i] != 0.0:
                blocks.append((i, 2))
                i += 2
            else:
                blocks.append((i, 1))
                i += 1
        self._blocks = blocks
        for start, size in blocks:
            if size == 1:
                if abs(self._d[start, start]) <= tol:
                    raise SingularMatrix("zero pivot in LDL^T factorization")
            else:
                a, b, c = self._d[start, start], self._d[start + 1, start], self._d[start + 1, start + 1]
                half_tr = 0.5 * (a + c)
                disc = np.hypot(0.5 * (a - c), b)
                if min(abs(half_tr - disc), abs(half_tr + disc)) <= tol:
                    raise SingularMatrix("singular 2x2 pivot block in LDL^T factorization")

    def _solve_factored(self, rhs: np.ndarray) -> np.ndarray:
        w = scipy.linalg.solve_triangular(
            self._tri, rhs[self._perm], lower=True, unit_diagonal=True
        )
        for start, size in self._blocks:
            if size == 1:
                w[start] /= self._d[start, start]
            else:
                block = self._d[start : start + 2, start : start + 2]
                w[start : start + 2] = scipy.linalg.solve(block, w[start : start + 2])
        v = scipy.linalg.solve_triangular(self._tri.T, w, lower=False, unit_diagonal=True)
        out = np.empty_like(v)
        out[self._perm] = v
        return out

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        b = np.asarray(rhs, dtype=float)
        if b.shape[0] != self.matrix.shape[0]:
            raise DimensionMismatch(f"rhs length {b.shape[0]} does not match matrix size {self.matrix.shape[0]}")
        x = self._solve_factored(b)
        x += self._solve_factored(b - self.matrix @ x)
        return x


@dataclass(frozen=True)
class KktSystem:
    """One equality-constrained quadratic subproblem.

        [ H  J^T ] [ step ]   [ -gradient ]
        [ J   0  ] [ mult ] = [ -residual ]

    hessian must be symmetric (checked to 1e-12 relative); the constraint
    block may be empty (zero rows).
    """

    hessian: np.ndarray
    constraint_jacobian: np.ndarray
    gradient: np.ndarray
    residual: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.hessian, dtype=float)
        j = np.asarray(self.constraint_jacobian, dtype=float)
        g = np.asarray(self.gradient, dtype=float)
        r = np.asarray(self.residual, dtype=float)
        object.__setattr__(self, "hessian", h)
        object.__setattr__(self, "constraint_jacobian", j)
        object.__setattr__(self, "gradient", g)
        object.__setattr__(self, "residual", r)
        n = h.shape[0]
        if h.ndim != 2 or h.shape[1] != n:
            raise DimensionMismatch(f"hessian must be square, got {h.shape}")
        if j.ndim != 2 or j.shape[1] != n:
            raise DimensionMismatch(f"constraint jacobian {j.shape} does not match state size {n}")
        if g.shape != (n,):
            raise DimensionMismatch(f"gradient shape {g.shape} does not match state size {n}")
        if r.shape != (j.shape[0],):
            raise DimensionMismatch(f"residual shape {r.shape} does not match constraint count {j.shape[0]}")
        for name, arr in (("hessian", h), ("constraint jacobian", j), ("gradient", g), ("residual", r)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite entries in {name}")
        scale = 1.0 + np.abs(h).max(initial=0.0)
        if np.abs(h - h.T).max(initial=0.0) > 1e-12 * scale:
            raise ValueError("hessian is not symmetric")

    @property
    def n_states(self) -> int:
        return self.hessian.shape[0]

    @property
    def n_constraints(self) -> int:
        return self.constraint_jacobian.shape[0]


@dataclass
class KktSolution:
    step: np.ndarray
    multipliers: np.ndarray
    regularized: bool = field(default=False)


def bordered_matrix(hessian: np.ndarray, constraint_jacobian: np.ndarray) -> np.ndarray:
    n = hessian.shape[0]
    m = constraint_jacobian.shape[0]
    out = np.zeros((n + m, n + m))
    out[:n, :n] = hessian
    out[:n, n:] = constraint_jacobian.T
    out[n:, :n] = constraint_jacobian
    return out


def solve_kkt(system: KktSystem) -> KktSolution:
    """Solve one KKT system by factoring the full bordered matrix.

    If the factorization hits a singular pivot, a ridge
    delta = RIDGE_SCALE (1 + max |diag H|) is added to the Hessian block
    only, a warning is emitted, and the solve is retried once.  A system
    that stays singular raises SingularKkt.

    Post-conditions (for the unridged solve): the stationarity and
    feasibility residuals of the returned solution are below 1e-8 in the
    infinity norm.
    """
    n = system.n_states
    rhs = np.concatenate([-system.gradient, -system.residual])
    matrix = bordered_matrix(system.hessian, system.constraint_jacobian)
    regularized = False
    try:
        factor = SymmetricFactor(matrix)
    except SingularMatrix:
        delta = RIDGE_SCALE * (1.0 + np.abs(np.diag(system.hessian)).max(initial=0.0))
        warnings.warn(f"KKT factorization failed, retrying with ridge {delta:.3e} on the Hessian block")
        matrix[:n, :n] += delta * np.eye(n)
        regularized = True
        try:
            factor = SymmetricFactor(matrix)
        except SingularMatrix as exc:
            raise SingularKkt("KKT system singular even after ridge regularization") from exc
    sol = factor.solve(rhs)
    return KktSolution(step=sol[:n], multipliers=sol[n:], regularized=regularized)
