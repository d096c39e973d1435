__version__ = "0.1.0"

from syncctl.algebra import CouplingPair, Hypothesis, SyncStructure, classify
from syncctl.fields import ControlSignal, StateField, Trajectory
from syncctl.grid import OmegaMask, SpatialGrid, TimeGrid
from syncctl.hum import HumOptions, MinNormResult, norm_curve, solve_min_norm
from syncctl.mintime import MinTimeResult, MinTimeStatus, solve_min_time, verify_solution

__all__ = [
    "ControlSignal",
    "CouplingPair",
    "HumOptions",
    "Hypothesis",
    "MinNormResult",
    "MinTimeResult",
    "MinTimeStatus",
    "OmegaMask",
    "SpatialGrid",
    "StateField",
    "SyncStructure",
    "TimeGrid",
    "Trajectory",
    "classify",
    "norm_curve",
    "solve_min_norm",
    "solve_min_time",
    "verify_solution",
    "__version__",
]
