"""Measurement simulation and weighted residual assembly.

Measured quantities are the full node state (theta, v, p, q) of original
buses and the directed line triple (f_p, f_q, f_i) of lines that stay whole
under the active partition.  Auxiliary buses are artifacts of the
decomposition, nothing measures them.

The noise model perturbs each true value with zero-mean Gaussian noise of
variance rel_var * max(value^2, floor^2): relative noise with an absolute
floor so near-zero channels (unloaded buses, small flows) are not measured
impossibly well.  Weights are fixed diagonal matrices chosen a priori, not
refitted per sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grid
from .errors import DimensionMismatch, UnknownBusReference, ValidationError


@dataclass(frozen=True)
class NoiseConfig:
    rel_var_theta: float = 1e-4
    rel_var_v: float = 1e-5
    rel_var_p: float = 1e-4
    rel_var_q: float = 1e-4
    rel_var_line: float = 1e-5
    floor: float = 1e-2

    def node_std(self, true_values: np.ndarray) -> np.ndarray:
        rel = np.array([self.rel_var_theta, self.rel_var_v, self.rel_var_p, self.rel_var_q])
        return np.sqrt(rel) * np.maximum(np.abs(true_values), self.floor)

    def line_std(self, true_values: np.ndarray) -> np.ndarray:
        return np.sqrt(self.rel_var_line) * np.maximum(np.abs(true_values), self.floor)


def default_node_weights() -> np.ndarray:
    """Diagonal of the nodal weight matrix, order (theta, v, p, q)."""
    return np.array([1e4, 1e5, 1e4, 1e4])


def default_line_weights() -> np.ndarray:
    """Diagonal of the line weight matrix, order (f_p, f_q, f_i)."""
    return np.array([1e4, 1e4, 1e4])


@dataclass(frozen=True)
class MeasurementSet:
    """Measured values and their weights for one scenario.

    node_values[i] holds the measured (theta, v, p, q) of node_ids[i];
    line_values[j] the measured (f_p, f_q, f_i) of the directed line
    line_ends[j] = (k, l) seen from the k side.  Weights are the diagonals
    of the corresponding weighting matrices.
    """

    node_ids: tuple[int, ...]
    node_values: np.ndarray
    node_weights: np.ndarray
    line_ends: tuple[tuple[int, int], ...]
    line_values: np.ndarray
    line_weights: np.ndarray

    def __post_init__(self):
        n, m = len(self.node_ids), len(self.line_ends)
        object.__setattr__(self, "node_values", np.asarray(self.node_values, dtype=float).reshape(n, 4))
        object.__setattr__(self, "node_weights", np.asarray(self.node_weights, dtype=float).reshape(n, 4))
        object.__setattr__(self, "line_values", np.asarray(self.line_values, dtype=float).reshape(m, 3))
        object.__setattr__(self, "line_weights", np.asarray(self.line_weights, dtype=float).reshape(m, 3))
        if len(set(self.node_ids)) != n:
            raise ValidationError("duplicate node ids in measurement set")
        if len(set(tuple(sorted(e)) for e in self.line_ends)) != m:
            raise ValidationError("duplicate lines in measurement set")
        if np.any(self.node_weights < 0.0) or np.any(self.line_weights < 0.0):
            raise ValidationError("weights must be non-negative")
        for name in ("node_values", "node_weights", "line_values", "line_weights"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError(f"non-finite entries in {name}")

    @property
    def n_channels(self) -> int:
        return 4 * len(self.node_ids) + 3 * len(self.line_ends)


def simulate_measurements(
    case: grid.GridCase,
    truth: np.ndarray,
    noise: NoiseConfig | None = NoiseConfig(),
    rng: np.random.Generator | int | None = None,
    measured_lines=None,
    node_weights: np.ndarray | None = None,
    line_weights: np.ndarray | None = None,
) -> MeasurementSet:
    """Perturb a true state into one measurement realization.

    Every bus of the case is measured; measured_lines defaults to all case
    lines and is restricted (as Line objects or endpoint pairs) by callers
    that work on a partitioned case, where cut lines carry no sensors.
    noise=None turns the perturbation off entirely, giving exact values.
    rng accepts a seed or a Generator; None draws an unseeded Generator.
    """
    if noise is None:
        noise = NoiseConfig(rel_var_theta=0.0, rel_var_v=0.0, rel_var_p=0.0,
                            rel_var_q=0.0, rel_var_line=0.0)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    if measured_lines is None:
        measured_lines = case.lines
    else:
        by_key = {line.key(): line for line in case.lines}
        resolved = []
        for entry in measured_lines:
            key = entry.key() if isinstance(entry, grid.Line) else (min(entry), max(entry))
            if key not in by_key:
                raise UnknownBusReference(f"measured line {key} is not a line of the case")
            resolved.append(by_key[key])
        measured_lines = tuple(resolved)
    if truth.shape != (4 * case.n_bus,):
        raise DimensionMismatch(f"truth length {truth.shape} does not match case size {4 * case.n_bus}")
    nw = default_node_weights() if node_weights is None else np.asarray(node_weights, dtype=float)
    lw = default_line_weights() if line_weights is None else np.asarray(line_weights, dtype=float)

    node_ids = case.bus_ids
    node_values = np.empty((len(node_ids), 4))
    for i, bus_id in enumerate(node_ids):
        true4 = truth[4 * case.index[bus_id] : 4 * case.index[bus_id] + 4]
        node_values[i] = true4 + rng.standard_normal(4) * noise.node_std(true4)

    line_ends = []
    line_values = np.empty((len(measured_lines), 3))
    for j, line in enumerate(measured_lines):
        x_k = truth[4 * case.index[line.from_bus] : 4 * case.index[line.from_bus] + 4]
        x_l = truth[4 * case.index[line.to_bus] : 4 * case.index[line.to_bus] + 4]
        true3 = grid.line_flow(x_k, x_l, line.g, line.b)
        line_values[j] = true3 + rng.standard_normal(3) * noise.line_std(true3)
        line_ends.append((line.from_bus, line.to_bus))

    return MeasurementSet(
        node_ids=node_ids,
        node_values=node_values,
        node_weights=np.tile(nw, (len(node_ids), 1)),
        line_ends=tuple(line_ends),
        line_values=line_values,
        line_weights=np.tile(lw, (len(measured_lines), 1)),
    )


def split_by_region(mset: MeasurementSet, partition) -> list[MeasurementSet]:
    """Restrict a global measurement set to each region of a partition.

    Every measured node and line must fall inside exactly one region;
    a measured line spanning two regions violates the modeling contract
    and raises ValidationError.
    """
    sets = []
    claimed_nodes: set[int] = set()
    claimed_lines: set[tuple[int, int]] = set()
    for region in partition.regions:
        own = set(region.original_bus_ids)
        node_rows = [i for i, node in enumerate(mset.node_ids) if node in own]
        line_rows = [j for j, (k, l) in enumerate(mset.line_ends) if k in own and l in own]
        claimed_nodes.update(mset.node_ids[i] for i in node_rows)
        claimed_lines.update(mset.line_ends[j] for j in line_rows)
        sets.append(
            MeasurementSet(
                node_ids=tuple(mset.node_ids[i] for i in node_rows),
                node_values=mset.node_values[node_rows].reshape(len(node_rows), 4),
                node_weights=mset.node_weights[node_rows].reshape(len(node_rows), 4),
                line_ends=tuple(mset.line_ends[j] for j in line_rows),
                line_values=mset.line_values[line_rows].reshape(len(line_rows), 3),
                line_weights=mset.line_weights[line_rows].reshape(len(line_rows), 3),
            )
        )
    stray_nodes = sorted(set(mset.node_ids) - claimed_nodes)
    if stray_nodes:
        raise ValidationError(f"measured nodes outside every region: {stray_nodes}")
    stray_lines = sorted(set(mset.line_ends) - claimed_lines)
    if stray_lines:
        raise ValidationError(
            f"measured lines must connect original nodes within one region, offending: {stray_lines}"
        )
    return sets


class RegionResidual:
    """Weighted measurement residual F of one case (region fragment or whole grid).

    Stacks sqrt(Sigma_k) (x_k - measured_k) for every measured node in
    ascending id order, then sqrt(W_kl) (f(x_k, x_l) - measured_kl) for
    every measured line in ascending endpoint order.  Output length is
    4 * measured nodes + 3 * measured lines.
    """

    def __init__(self, case: grid.GridCase, mset: MeasurementSet):
        self.case = case
        unknown = [node for node in mset.node_ids if node not in case.index]
        if unknown:
            raise ValidationError(f"measured nodes missing from the case: {unknown}")
        node_order = sorted(range(len(mset.node_ids)), key=lambda i: case.index[mset.node_ids[i]])
        self.node_ids = tuple(mset.node_ids[i] for i in node_order)
        self.node_pos = np.array([case.index[n] for n in self.node_ids], dtype=int)
        self.node_values = mset.node_values[node_order].reshape(len(node_order), 4)
        self.node_sqrt_w = np.sqrt(mset.node_weights[node_order].reshape(len(node_order), 4))

        by_key = {line.key(): line for line in case.lines}
        lines = []
        for j, ends in enumerate(mset.line_ends):
            key = (min(ends), max(ends))
            if key not in by_key:
                raise ValidationError(f"measured line {ends} is not a line of the case")
            line = by_key[key]
            lines.append((ends, line.g, line.b, j))
        lines.sort(key=lambda item: item[0])
        self.line_ends = tuple(item[0] for item in lines)
        self.line_gb = [(g, b) for _, g, b, _ in lines]
        rows = [item[3] for item in lines]
        self.line_values = mset.line_values[rows].reshape(len(rows), 3)
        self.line_sqrt_w = np.sqrt(mset.line_weights[rows].reshape(len(rows), 3))

    @property
    def n_rows(self) -> int:
        return 4 * len(self.node_ids) + 3 * len(self.line_ends)

    @property
    def n_states(self) -> int:
        return 4 * self.case.n_bus

    def eval(self, z: np.ndarray) -> np.ndarray:
        out = np.empty(self.n_rows)
        nn = len(self.node_ids)
        for i, pos in enumerate(self.node_pos):
            out[4 * i : 4 * i + 4] = self.node_sqrt_w[i] * (z[4 * pos : 4 * pos + 4] - self.node_values[i])
        for j, ((k, l), (g, b)) in enumerate(zip(self.line_ends, self.line_gb)):
            pk, pl = self.case.index[k], self.case.index[l]
            flow = grid.line_flow(z[4 * pk : 4 * pk + 4], z[4 * pl : 4 * pl + 4], g, b)
            out[4 * nn + 3 * j : 4 * nn + 3 * j + 3] = self.line_sqrt_w[j] * (flow - self.line_values[j])
        return out

    def jacobian(self, z: np.ndarray) -> np.ndarray:
        jac = np.zeros((self.n_rows, self.n_states))
        nn = len(self.node_ids)
        for i, pos in enumerate(self.node_pos):
            for c in range(4):
                jac[4 * i + c, 4 * pos + c] = self.node_sqrt_w[i, c]
        for j, ((k, l), (g, b)) in enumerate(zip(self.line_ends, self.line_gb)):
            pk, pl = self.case.index[k], self.case.index[l]
            block = grid.line_flow_jacobian(z[4 * pk : 4 * pk + 4], z[4 * pl : 4 * pl + 4], g, b)
            row = 4 * nn + 3 * j
            jac[row : row + 3, 4 * pk : 4 * pk + 4] = self.line_sqrt_w[j][:, None] * block[:, :4]
            jac[row : row + 3, 4 * pl : 4 * pl + 4] = self.line_sqrt_w[j][:, None] * block[:, 4:]
        return jac
