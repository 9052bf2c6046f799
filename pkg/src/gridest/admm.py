"""Edge-consensus ADMM baseline for the same partitioned estimation problem.

Coupling is enforced on the auxiliary boundary copies only: for each
auxiliary pair both regions hold a copy of the pair's (theta, v) and the
coordinator keeps one shared value zeta per copied coordinate.  Region i
minimizes its local fit plus lam_i^T (E_i y - zeta_i) + (rho/2)
||E_i y - zeta_i||^2 subject to its power-flow physics, the coordinator
averages the two copies of each pair, and the scaled multipliers take the
usual residual update.

The reported consensus violation uses the same metric as the
Gauss-Newton driver, ||sum_i A_i y_i||_inf, so the two histories compare
like for like.  Per iteration each region uploads its 2|A_i| copies and
downloads the 2|A_i| averaged values.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import grid, local_solver, measurements, partition as partition_mod
from .aladin import IterationRecord, build_workspaces
from .errors import InnerDiverged


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 1e4
    tol: float = 1e-4
    max_outer: int = 200
    inner_tol: float = 1e-8
    max_inner: int = 50
    workers: int | None = None


@dataclass
class AdmmResult:
    zs: list[np.ndarray]
    converged: bool
    iterations: int
    history: list[IterationRecord]
    note: str = ""

    @property
    def final_violation(self) -> float:
        return self.history[-1].consensus_violation if self.history else np.nan


def run_admm(
    part: partition_mod.Partition,
    mset: measurements.MeasurementSet,
    config: AdmmConfig | None = None,
    z0: list[np.ndarray] | None = None,
    truth: np.ndarray | None = None,
) -> AdmmResult:
    config = config or AdmmConfig()
    spaces = build_workspaces(part, mset)
    n_rows = 2 * len(part.aux_pairs)
    # rows[i][t] is the shared slot fed by state coordinate cols[i][t] of region i.
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    for i in range(part.n_regions):
        r, c = partition_mod.coupled_indices(part, i)
        rows.append(r)
        cols.append(c)
    zs = [grid.flat_state(r.case.n_bus) for r in part.regions] if z0 is None else [np.array(z) for z in z0]
    zeta = np.zeros(n_rows)
    counts = np.zeros(n_rows)
    for i in range(part.n_regions):
        np.add.at(zeta, rows[i], zs[i][cols[i]])
        np.add.at(counts, rows[i], 1.0)
    zeta /= counts
    lams = [np.zeros(len(rows[i])) for i in range(part.n_regions)]
    history: list[IterationRecord] = []
    converged = False
    note = ""

    def solve_region(i: int, y_start: np.ndarray) -> local_solver.LocalSolution:
        ws = spaces[i]
        lin = np.zeros(y_start.size)
        np.add.at(lin, cols[i], lams[i])
        return local_solver.solve_local(
            ws.residual,
            ws.model,
            y0=y_start,
            rho=config.rho,
            lin=lin,
            prox_target=zeta[rows[i]],
            prox_idx=cols[i],
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
            violation = np.abs(
                np.sum([spaces[i].coupling @ ys[i] for i in range(part.n_regions)], axis=0)
            ).max(initial=0.0)
            step_norm = max(np.abs(y - z).max(initial=0.0) for y, z in zip(ys, zs))
            zeta_new = np.zeros(n_rows)
            for i in range(part.n_regions):
                np.add.at(zeta_new, rows[i], ys[i][cols[i]])
            zeta_new /= counts
            for i in range(part.n_regions):
                lams[i] = lams[i] + config.rho * (ys[i][cols[i]] - zeta_new[rows[i]])
            zeta = zeta_new
            state_error = np.nan
            if truth is not None:
                estimate = partition_mod.restrict_state(part, ys)
                state_error = np.abs(estimate - truth).max(initial=0.0)
            per_region = [len(rows[i]) for i in range(part.n_regions)]
            history.append(
                IterationRecord(
                    iteration=k,
                    consensus_violation=violation,
                    step_norm=step_norm,
                    objective=sum(sol.fit for sol in locals_),
                    inner_iterations=tuple(sol.inner_iterations for sol in locals_),
                    state_error=state_error,
                    upload_floats=sum(per_region),
                    download_floats=sum(per_region),
                    regularized=False,
                )
            )
            zs = ys
            if violation <= config.tol:
                converged = True
                break
    if not converged and not note and len(history) >= config.max_outer:
        note = f"consensus not reached within {config.max_outer} outer iterations"
    return AdmmResult(
        zs=zs,
        converged=converged,
        iterations=len(history),
        history=history,
        note=note,
    )
