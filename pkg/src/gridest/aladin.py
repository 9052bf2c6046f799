"""Distributed Gauss-Newton consensus estimation (ALADIN outer loop).

Each outer iteration solves every region's proximal subproblem in parallel
(the regional solves only read immutable inputs, so they run on a thread
pool and join at a barrier), collects the Gauss-Newton sensitivities, and
either stops or performs the coupled consensus QP followed by the full
step update z <- y + dy, lam <- lam_QP.

Termination needs both the consensus mismatch ||sum_i A_i y_i||_inf and
the largest proximal displacement ||y_i - z_i||_inf to drop below eps.
The final iteration therefore uploads sensitivities but downloads nothing,
which the communication meter reflects.

Communication accounting follows two books kept side by side: the closed
formulas (per iteration: upload sum_i 6|N_i| + 16|N_i|^2 + 2|A|, download
2|A| + 4|N_i| per region, |N_i| counting original plus auxiliary nodes)
and the measured number of floats actually crossing the region to
coordinator boundary (B_i^T B_i packed symmetric, C_i dense, B_i^T b_i,
A_i y_i up; lam and dy_i down).  The two agree exactly with this payload
set; both are reported so the agreement stays an observable fact rather
than an assumption.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import coordinator, grid, local_solver, measurements, partition as partition_mod
from .errors import InnerDiverged


@dataclass(frozen=True)
class AladinConfig:
    rho: float = 1e4
    eps: float = 1e-4
    max_outer: int = 50
    inner_tol: float = 1e-8
    max_inner: int = 50
    workers: int | None = None


@dataclass
class IterationRecord:
    iteration: int
    consensus_violation: float
    step_norm: float
    objective: float
    inner_iterations: tuple[int, ...]
    state_error: float
    upload_floats: int
    download_floats: int
    regularized: bool
    note: str = ""


@dataclass(frozen=True)
class CommFormula:
    """Closed-form per-iteration float counts."""

    upload_per_region: tuple[int, ...]
    download_per_region: tuple[int, ...]

    @property
    def upload_total(self) -> int:
        return sum(self.upload_per_region)

    @property
    def download_total(self) -> int:
        return sum(self.download_per_region)


def comm_counts(part: partition_mod.Partition) -> CommFormula:
    """Formula counts for one partition; node counts include auxiliary buses."""
    n_pairs = len(part.aux_pairs)
    upload = tuple(
        6 * region.case.n_bus + 16 * region.case.n_bus**2 + 2 * n_pairs
        for region in part.regions
    )
    download = tuple(2 * n_pairs + 4 * region.case.n_bus for region in part.regions)
    return CommFormula(upload_per_region=upload, download_per_region=download)


@dataclass
class AladinResult:
    zs: list[np.ndarray]
    lam: np.ndarray
    converged: bool
    iterations: int
    history: list[IterationRecord]
    formula: CommFormula
    note: str = ""

    @property
    def final_violation(self) -> float:
        return self.history[-1].consensus_violation if self.history else np.nan


@dataclass
class _RegionWorkspace:
    residual: measurements.RegionResidual
    model: grid.PowerFlowModel
    coupling: np.ndarray


def build_workspaces(
    part: partition_mod.Partition, mset: measurements.MeasurementSet
) -> list[_RegionWorkspace]:
    region_sets = measurements.split_by_region(mset, part)
    return [
        _RegionWorkspace(
            residual=measurements.RegionResidual(region.case, region_set),
            model=grid.PowerFlowModel(region.case),
            coupling=coupling,
        )
        for region, region_set, coupling in zip(part.regions, region_sets, part.coupling)
    ]


def run_aladin(
    part: partition_mod.Partition,
    mset: measurements.MeasurementSet,
    config: AladinConfig | None = None,
    z0: list[np.ndarray] | None = None,
    lam0: np.ndarray | None = None,
    truth: np.ndarray | None = None,
) -> AladinResult:
    """Run the distributed estimator until consensus or max_outer.

    z0 defaults to flat fragment states, lam0 to zero.  truth, when given,
    is the true global state used only to log the estimation error of the
    original nodes; it never influences the iteration.
    """
    config = config or AladinConfig()
    spaces = build_workspaces(part, mset)
    n_pairs = len(part.aux_pairs)
    zs = [grid.flat_state(r.case.n_bus) for r in part.regions] if z0 is None else [np.array(z) for z in z0]
    lam = np.zeros(2 * n_pairs) if lam0 is None else np.array(lam0, dtype=float)
    formula = comm_counts(part)
    history: list[IterationRecord] = []
    converged = False
    note = ""

    def solve_region(i: int, z_i: np.ndarray) -> local_solver.LocalSolution:
        ws = spaces[i]
        return local_solver.solve_local(
            ws.residual,
            ws.model,
            y0=z_i,
            rho=config.rho,
            lin=ws.coupling.T @ lam,
            prox_target=z_i,
            tol=config.inner_tol,
            max_inner=config.max_inner,
        )

    workers = config.workers or max(1, part.n_regions)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for k in range(1, config.max_outer + 1):
            try:
                locals_ = list(pool.map(solve_region, range(part.n_regions), zs))
            except InnerDiverged as exc:
                note = f"inner solve diverged at outer iteration {k}: {exc}"
                break
            ys = [sol.y for sol in locals_]
            uploads = [
                coordinator.SensitivityUpload(
                    region=i,
                    fit_hessian=sol.residual_jacobian.T @ sol.residual_jacobian,
                    fit_gradient=sol.residual_jacobian.T @ sol.residual,
                    constraint_jacobian=sol.constraint_jacobian,
                    coupling_image=spaces[i].coupling @ sol.y,
                )
                for i, sol in enumerate(locals_)
            ]
            upload_floats = sum(up.float_count() for up in uploads)
            violation = np.abs(
                np.sum([up.coupling_image for up in uploads], axis=0)
            ).max(initial=0.0)
            step_norm = max(
                np.abs(y - z).max(initial=0.0) for y, z in zip(ys, zs)
            )
            objective = sum(sol.fit for sol in locals_)
            state_error = np.nan
            if truth is not None:
                estimate = partition_mod.restrict_state(part, ys)
                state_error = np.abs(estimate - truth).max(initial=0.0)
            record = IterationRecord(
                iteration=k,
                consensus_violation=violation,
                step_norm=step_norm,
                objective=objective,
                inner_iterations=tuple(sol.inner_iterations for sol in locals_),
                state_error=state_error,
                upload_floats=upload_floats,
                download_floats=0,
                regularized=False,
                note="",
            )
            if violation <= config.eps and step_norm <= config.eps:
                zs = ys
                history.append(record)
                converged = True
                break
            consensus = coordinator.solve_consensus(uploads, list(part.coupling))
            record.download_floats = sum(
                consensus.float_count(i) for i in range(part.n_regions)
            )
            record.regularized = consensus.regularized
            if consensus.regularized:
                record.note = "ridge-regularized consensus step"
            history.append(record)
            zs = [y + dy for y, dy in zip(ys, consensus.steps)]
            lam = consensus.lam
    if not converged and not note and len(history) >= config.max_outer:
        note = f"consensus not reached within {config.max_outer} outer iterations"
    return AladinResult(
        zs=zs,
        lam=lam,
        converged=converged,
        iterations=len(history),
        history=history,
        formula=formula,
        note=note,
    )
