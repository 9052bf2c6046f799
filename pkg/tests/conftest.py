"""Shared fixtures: the bundled cases and one default 30-bus scenario.

The expensive objects (power flow truth, the seed-7 measurement set, one
distributed and one centralized solve) are session scoped; tests treat
them as read-only.
"""

from __future__ import annotations

import numpy as np
import pytest

from gridest import aladin, caseio, central, measurements, partition, powerflow

DEFAULT_SEED = 7


@pytest.fixture(scope="session")
def case30():
    return caseio.builtin_case("ieee30")


@pytest.fixture(scope="session")
def case6():
    return caseio.builtin_case("six_bus")


@pytest.fixture(scope="session")
def case12():
    return caseio.builtin_case("twelve_bus")


@pytest.fixture(scope="session")
def part30(case30):
    _, assignment = caseio.builtin_partition_spec("default4")
    return partition.partition_grid(case30, assignment)


@pytest.fixture(scope="session")
def part6(case6):
    _, assignment = caseio.builtin_partition_spec("six2")
    return partition.partition_grid(case6, assignment)


@pytest.fixture(scope="session")
def part12(case12):
    _, assignment = caseio.builtin_partition_spec("twelve3")
    return partition.partition_grid(case12, assignment)


@pytest.fixture(scope="session")
def truth30(case30):
    return powerflow.solve_power_flow(case30).state


@pytest.fixture(scope="session")
def truth6(case6):
    return powerflow.solve_power_flow(case6).state


@pytest.fixture(scope="session")
def truth12(case12):
    return powerflow.solve_power_flow(case12).state


@pytest.fixture(scope="session")
def mset30(case30, part30, truth30):
    """The default scenario: seed 7, sensors on intact lines only."""
    return measurements.simulate_measurements(
        case30, truth30, rng=DEFAULT_SEED,
        measured_lines=partition.internal_line_keys(part30),
    )


@pytest.fixture(scope="session")
def aladin30(part30, mset30, truth30):
    return aladin.run_aladin(part30, mset30, truth=truth30)


@pytest.fixture(scope="session")
def central30(case30, mset30):
    return central.solve_central(case30, mset30)


def random_states(n_bus: int, count: int, seed: int) -> np.ndarray:
    """Operating-range random states: v in [0.9, 1.1], theta in [-0.3, 0.3]."""
    rng = np.random.default_rng(seed)
    out = np.empty((count, 4 * n_bus))
    out[:, 0::4] = rng.uniform(-0.3, 0.3, (count, n_bus))
    out[:, 1::4] = rng.uniform(0.9, 1.1, (count, n_bus))
    out[:, 2::4] = rng.uniform(-1.0, 1.0, (count, n_bus))
    out[:, 3::4] = rng.uniform(-1.0, 1.0, (count, n_bus))
    return out


def fd_jacobian(fun, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences, one column per state component."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((fun(x + e) - fun(x - e)) / (2.0 * h))
    return np.column_stack(cols)
