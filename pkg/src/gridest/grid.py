"""Network model, state conventions and AC power flow expressions.

Conventions used across the whole package:

* Node state is the 4-vector (theta_k, v_k, p_k, q_k): voltage angle in
  radians, voltage magnitude, net active and net reactive injection, all
  per-unit.  A network state vector stacks node states node-major, so it
  has length 4 N and component 4 i + c is component c of the i-th node in
  sorted-id order.
* A line is a series admittance y = g + j b obtained from its resistance
  and reactance as y = 1 / (r + j x), i.e. g = r / (r^2 + x^2) and
  b = -x / (r^2 + x^2).  There are no shunt elements anywhere: the bus
  admittance matrix Y = G + j B has exact zero row sums, with
  Y_kl = -(g_kl + j b_kl) off the diagonal and the negated sum of the
  off-diagonal entries on the diagonal.
* The power flow residual at node k is

      r_p,k = p_k - v_k sum_l v_l (G_kl cos th_kl + B_kl sin th_kl)
      r_q,k = q_k - v_k sum_l v_l (G_kl sin th_kl - B_kl cos th_kl)

  with th_kl = theta_k - theta_l.  Residuals stack node-major as
  (r_p,0, r_q,0, r_p,1, ...), giving a vector of length 2 N.  A state is
  physical when this vector is zero.
* Directed line quantities measured at the k end of line (k, l):

      f_p = v_k (v_k g - v_l g cos th_kl) - v_k v_l b sin th_kl
      f_q = -v_k (v_k b - v_l b cos th_kl) + v_k v_l g sin th_kl
      f_i = (f_p^2 + f_q^2) / v_k^2

  f_i is the squared current magnitude, which needs v_k > 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DuplicateLine,
    UnknownBusReference,
    ValidationError,
    ZeroVoltage,
)

# Offsets of the state components inside a node block.
THETA, V, P, Q = 0, 1, 2, 3

BUS_KINDS = ("slack", "pv", "pq")


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str = "pq"
    p_load: float = 0.0
    q_load: float = 0.0
    p_gen: float = 0.0
    q_gen: float = 0.0
    v_setpoint: float = 1.0

    def __post_init__(self):
        if self.kind not in BUS_KINDS:
            raise ValidationError(f"bus {self.id}: unknown kind {self.kind!r}, expected one of {BUS_KINDS}")
        if self.v_setpoint <= 0.0:
            raise ValidationError(f"bus {self.id}: voltage setpoint must be positive")

    @property
    def p_injection(self) -> float:
        return self.p_gen - self.p_load

    @property
    def q_injection(self) -> float:
        return self.q_gen - self.q_load


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    r: float
    x: float

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise ValidationError(f"line {self.from_bus}-{self.to_bus}: self loops are not allowed")
        if self.r * self.r + self.x * self.x <= 0.0:
            raise ValidationError(f"line {self.from_bus}-{self.to_bus}: r^2 + x^2 must be positive")

    @property
    def admittance(self) -> complex:
        return 1.0 / complex(self.r, self.x)

    @property
    def g(self) -> float:
        return self.admittance.real

    @property
    def b(self) -> float:
        return self.admittance.imag

    def key(self) -> tuple[int, int]:
        """Unordered endpoint pair, used to detect duplicates."""
        return (min(self.from_bus, self.to_bus), max(self.from_bus, self.to_bus))


@dataclass(frozen=True)
class GridCase:
    """An immutable shunt-free network: buses plus series lines."""

    name: str
    base_mva: float
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    index: dict[int, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.base_mva <= 0.0:
            raise ValidationError("base MVA must be positive")
        ids = [bus.id for bus in self.buses]
        if len(set(ids)) != len(ids):
            seen, dupes = set(), set()
            for i in ids:
                (dupes if i in seen else seen).add(i)
            raise ValidationError(f"duplicate bus ids: {sorted(dupes)}")
        order = sorted(range(len(self.buses)), key=lambda i: self.buses[i].id)
        object.__setattr__(self, "buses", tuple(self.buses[i] for i in order))
        object.__setattr__(self, "index", {bus.id: i for i, bus in enumerate(self.buses)})
        keys = set()
        for line in self.lines:
            if line.from_bus not in self.index or line.to_bus not in self.index:
                raise UnknownBusReference(
                    f"line {line.from_bus}-{line.to_bus} references a bus that is not in the case"
                )
            if line.key() in keys:
                raise DuplicateLine(f"line {line.from_bus}-{line.to_bus} appears twice")
            keys.add(line.key())

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def bus_ids(self) -> tuple[int, ...]:
        return tuple(bus.id for bus in self.buses)

    def bus(self, bus_id: int) -> Bus:
        return self.buses[self.index[bus_id]]


def build_admittance(case: GridCase) -> tuple[np.ndarray, np.ndarray]:
    """Dense bus admittance matrix split into real and imaginary parts.

    Returns (G, B).  Diagonals are accumulated as the negated off-diagonal
    sums, so row sums vanish exactly up to float rounding.
    """
    n = case.n_bus
    g = np.zeros((n, n))
    b = np.zeros((n, n))
    for line in case.lines:
        i = case.index[line.from_bus]
        j = case.index[line.to_bus]
        y = line.admittance
        g[i, j] -= y.real
        g[j, i] -= y.real
        b[i, j] -= y.imag
        b[j, i] -= y.imag
        g[i, i] += y.real
        g[j, j] += y.real
        b[i, i] += y.imag
        b[j, j] += y.imag
    return g, b


# ---------------------------------------------------------------------------
# state vector helpers

def state_size(n_bus: int) -> int:
    return 4 * n_bus


def flat_state(n_bus: int) -> np.ndarray:
    """Flat start: unit magnitudes, zero angles, zero injections."""
    x = np.zeros(4 * n_bus)
    x[V::4] = 1.0
    return x


def unpack_state(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Views (theta, v, p, q) into a node-major state vector."""
    return x[THETA::4], x[V::4], x[P::4], x[Q::4]


def pack_state(theta: np.ndarray, v: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    x = np.empty(4 * len(theta))
    x[THETA::4], x[V::4], x[P::4], x[Q::4] = theta, v, p, q
    return x


def complex_voltage(x: np.ndarray) -> np.ndarray:
    theta, v, _, _ = unpack_state(x)
    return v * np.exp(1j * theta)


# ---------------------------------------------------------------------------
# power flow equations

def calculated_injections(g: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Complex injections S = V conj(Y V) implied by the voltages in x."""
    vc = complex_voltage(x)
    y = g + 1j * b
    return vc * np.conj(y @ vc)


def power_flow_residual(g: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Residual of the power flow equations, length 2 N, node-major."""
    _, _, p, q = unpack_state(x)
    s = calculated_injections(g, b, x)
    out = np.empty(2 * len(p))
    out[0::2] = p - s.real
    out[1::2] = q - s.imag
    return out


def _injection_voltage_jacobians(g: np.ndarray, b: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # dS/dtheta and dS/dv of S = V conj(Y V), both complex N x N.
    vc = complex_voltage(x)
    _, v, _, _ = unpack_state(x)
    y = g + 1j * b
    ibus = y @ vc
    diag_v = np.diag(vc)
    diag_i = np.diag(ibus)
    diag_vnorm = np.diag(vc / v)
    ds_dva = 1j * diag_v @ np.conj(diag_i - y @ diag_v)
    ds_dvm = diag_v @ np.conj(y @ diag_vnorm) + np.conj(diag_i) @ diag_vnorm
    return ds_dva, ds_dvm


def jacobian_power_flow(g: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Jacobian of power_flow_residual, shape (2 N, 4 N)."""
    n = len(x) // 4
    ds_dva, ds_dvm = _injection_voltage_jacobians(g, b, x)
    jac = np.zeros((2 * n, 4 * n))
    jac[0::2, THETA::4] = -ds_dva.real
    jac[0::2, V::4] = -ds_dvm.real
    jac[1::2, THETA::4] = -ds_dva.imag
    jac[1::2, V::4] = -ds_dvm.imag
    rows = np.arange(n)
    jac[2 * rows, 4 * rows + P] = 1.0
    jac[2 * rows + 1, 4 * rows + Q] = 1.0
    return jac


class PowerFlowModel:
    """Equality constraints H(x) = 0 of one network, with Jacobian.

    Wraps the admittance matrix of a case so solvers can evaluate the
    physics without rebuilding it.
    """

    def __init__(self, case: GridCase):
        self.case = case
        self.g, self.b = build_admittance(case)

    @property
    def n_constraints(self) -> int:
        return 2 * self.case.n_bus

    @property
    def n_states(self) -> int:
        return 4 * self.case.n_bus

    def eval(self, x: np.ndarray) -> np.ndarray:
        return power_flow_residual(self.g, self.b, x)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        return jacobian_power_flow(self.g, self.b, x)


# ---------------------------------------------------------------------------
# directed line measurements

def line_flow(x_k: np.ndarray, x_l: np.ndarray, g: float, b: float) -> np.ndarray:
    """Directed line quantities (f_p, f_q, f_i) seen from the k end.

    x_k and x_l are the 4-component node states of the two endpoints, g and
    b the series admittance parts of the line between them.  Raises
    ZeroVoltage when v_k <= 0 because the squared current divides by v_k^2.
    """
    th = x_k[THETA] - x_l[THETA]
    vk, vl = x_k[V], x_l[V]
    if vk <= 0.0:
        raise ZeroVoltage("line measurement functions need v_k > 0")
    cos, sin = np.cos(th), np.sin(th)
    f_p = vk * (vk * g - vl * g * cos) - vk * vl * b * sin
    f_q = -vk * (vk * b - vl * b * cos) + vk * vl * g * sin
    f_i = (f_p * f_p + f_q * f_q) / (vk * vk)
    return np.array([f_p, f_q, f_i])


def line_flow_jacobian(x_k: np.ndarray, x_l: np.ndarray, g: float, b: float) -> np.ndarray:
    """Jacobian of line_flow w.r.t. (x_k, x_l), shape (3, 8).

    Column order matches two stacked node states; the injection columns
    are zero since the flow depends on voltages only.
    """
    th = x_k[THETA] - x_l[THETA]
    vk, vl = x_k[V], x_l[V]
    if vk <= 0.0:
        raise ZeroVoltage("line measurement functions need v_k > 0")
    cos, sin = np.cos(th), np.sin(th)
    f_p = vk * (vk * g - vl * g * cos) - vk * vl * b * sin
    f_q = -vk * (vk * b - vl * b * cos) + vk * vl * g * sin

    jac = np.zeros((3, 8))
    dfp_dth = vk * vl * (g * sin - b * cos)
    dfq_dth = vk * vl * (g * cos - b * sin)
    jac[0, THETA] = dfp_dth
    jac[0, 4 + THETA] = -dfp_dth
    jac[0, V] = 2.0 * vk * g - vl * (g * cos + b * sin)
    jac[0, 4 + V] = -vk * (g * cos + b * sin)
    jac[1, THETA] = dfq_dth
    jac[1, 4 + THETA] = -dfq_dth
    jac[1, V] = -2.0 * vk * b + vl * (b * cos + g * sin)
    jac[1, 4 + V] = vk * (b * cos + g * sin)
    # f_i = (f_p^2 + f_q^2) / v_k^2, chain rule plus the explicit v_k term.
    inv_vk2 = 1.0 / (vk * vk)
    jac[2, :] = (2.0 * f_p * jac[0, :] + 2.0 * f_q * jac[1, :]) * inv_vk2
    jac[2, V] -= 2.0 * (f_p * f_p + f_q * f_q) / (vk * vk * vk)
    return jac


def line_losses(case: GridCase, x: np.ndarray) -> float:
    """Total series active power loss sum_l g_l |V_k - V_l|^2."""
    vc = complex_voltage(x)
    total = 0.0
    for line in case.lines:
        dv = vc[case.index[line.from_bus]] - vc[case.index[line.to_bus]]
        total += line.g * (dv.real * dv.real + dv.imag * dv.imag)
    return total
