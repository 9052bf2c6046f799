"""Newton-Raphson power flow in polar coordinates.

Solves the classic slack/PV/PQ problem for one case: angles are unknown
everywhere except the slack bus, magnitudes are unknown at PQ buses.  After
convergence the injections at every bus are back-computed from the final
voltages so the returned state satisfies the full power flow residual to
machine precision, not just to the mismatch tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grid, linalg
from .errors import Diverged, SingularJacobian, SingularMatrix, ValidationError

#: Hard cap on the mismatch norm; beyond this the iteration is declared lost.
_BLOWUP = 1e6


@dataclass
class PowerFlowSolution:
    state: np.ndarray
    iterations: int
    mismatch: float


def solve_power_flow(case: grid.GridCase, tol: float = 1e-10, max_iter: int = 30) -> PowerFlowSolution:
    """Solve the power flow of a case from a flat start.

    Returns a PowerFlowSolution whose state is the full 4 N node-major
    vector with back-computed injections (the power flow residual of the
    returned state is zero to rounding).

    Raises Diverged when the mismatch blows up or the iteration budget is
    exhausted, SingularJacobian when the Newton matrix loses rank, and
    ValidationError for a case without exactly one slack bus.
    """
    slack = [i for i, bus in enumerate(case.buses) if bus.kind == "slack"]
    if len(slack) != 1:
        raise ValidationError(f"power flow needs exactly one slack bus, case has {len(slack)}")
    g, b = grid.build_admittance(case)
    n = case.n_bus
    kinds = np.array([bus.kind for bus in case.buses])
    pq = np.flatnonzero(kinds == "pq")
    non_slack = np.flatnonzero(kinds != "slack")

    p_spec = np.array([bus.p_injection for bus in case.buses])
    q_spec = np.array([bus.q_injection for bus in case.buses])
    theta = np.zeros(n)
    v = np.ones(n)
    for i, bus in enumerate(case.buses):
        if bus.kind in ("slack", "pv"):
            v[i] = bus.v_setpoint

    def mismatch_vector(theta: np.ndarray, v: np.ndarray) -> np.ndarray:
        x = grid.pack_state(theta, v, p_spec, q_spec)
        s = grid.calculated_injections(g, b, x)
        return np.concatenate([(p_spec - s.real)[non_slack], (q_spec - s.imag)[pq]])

    mis = mismatch_vector(theta, v)
    for it in range(1, max_iter + 1):
        x = grid.pack_state(theta, v, p_spec, q_spec)
        ds_dva, ds_dvm = grid._injection_voltage_jacobians(g, b, x)
        jac = np.block(
            [
                [ds_dva.real[np.ix_(non_slack, non_slack)], ds_dvm.real[np.ix_(non_slack, pq)]],
                [ds_dva.imag[np.ix_(pq, non_slack)], ds_dvm.imag[np.ix_(pq, pq)]],
            ]
        )
        try:
            step = linalg.solve_linear(jac, mis)
        except SingularMatrix as exc:
            raise SingularJacobian(f"power flow Jacobian singular at iteration {it}") from exc
        theta = theta.copy()
        v = v.copy()
        theta[non_slack] += step[: len(non_slack)]
        v[pq] += step[len(non_slack) :]
        mis = mismatch_vector(theta, v)
        norm = np.abs(mis).max(initial=0.0)
        if not np.isfinite(norm) or norm > _BLOWUP:
            raise Diverged(f"power flow mismatch blew up at iteration {it}")
        if norm <= tol:
            x = grid.pack_state(theta, v, p_spec, q_spec)
            s = grid.calculated_injections(g, b, x)
            state = grid.pack_state(theta, v, s.real, s.imag)
            return PowerFlowSolution(state=state, iterations=it, mismatch=norm)
    raise Diverged(f"power flow did not reach tol {tol:g} in {max_iter} iterations")
