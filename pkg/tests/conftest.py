import numpy as np
import pytest

from syncctl.algebra import CouplingPair, classify
from syncctl.config import loads, to_string
from syncctl.mintime import estimate_limit_norm

#: equal row sums, (Ã, DB) = ([0.5], [-1]) controllable
EQUAL_ROWS_A = [[1.0, 0.0], [0.5, 0.5]]
#: row sums 3 and 7, (A, B) controllable
UNEQUAL_ROWS_A = [[1.0, 2.0], [3.0, 4.0]]
SECOND_COMPONENT_B = [[0.0], [1.0]]


@pytest.fixture
def h1_pair():
    return CouplingPair(np.array(EQUAL_ROWS_A), np.array(SECOND_COMPONENT_B))


@pytest.fixture
def h2_pair():
    return CouplingPair(np.array(UNEQUAL_ROWS_A), np.array(SECOND_COMPONENT_B))


@pytest.fixture
def neither_pair():
    return CouplingPair(np.eye(2), np.zeros((2, 1)))


def sine(grid, k=1):
    return np.sin(k * np.pi * grid.nodes / grid.length)


def h1_config(**overrides):
    """Configuration for the equal-rows pair with ``y0 = (sin πx, 0)``."""
    data = {
        "matrices": {"n": 2, "m": 1, "A": [1.0, 0.0, 0.5, 0.5], "B": [0.0, 1.0]},
        "domain": {"length": 1.0, "nx": 30},
        "omega": [[0.3, 0.8]],
        "time": {"T": 0.5, "nt_ref": 40, "T_values": [0.25, 0.5, 1.0]},
        "initial_state": [{"mode": "sin", "k": 1, "c": 1.0}, {"mode": "const", "c": 0.0}],
        "mintime": {"T_lo": 0.1, "T_hi": 1.0, "T_max": 2.0},
        "outputs": {"dir": "out", "formats": ["json", "csv"]},
    }
    data.update(overrides)
    return data


def limit_norm(data):
    """``N(T_max)`` for a configuration object, the estimate min-time compares M against."""
    config = loads(to_string(data))
    options = config.mintime.options
    return estimate_limit_norm(
        classify(config.pair()),
        config.resolve_initial_state(),
        config.grid(),
        config.mask(),
        T_max=options.T_max,
        hum_options=config.solver,
        nt_ref=options.nt_ref,
    ).value


@pytest.fixture
def write_config(tmp_path):
    """Write a configuration object to ``config.json`` under ``tmp_path``."""

    def write(data, name="config.json"):
        path = tmp_path / name
        path.write_text(to_string(data) if not isinstance(data, str) else data)
        return path

    return write
