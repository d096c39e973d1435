from dataclasses import dataclass
from typing import Union

import numpy as np

from syncctl.exceptions import InvalidDimension
from syncctl.grid import OmegaMask, TimeGrid


class StateField(np.ndarray):
    """Convenience class to make a ``k × nx`` :class:`numpy.ndarray`
    act like a vector-valued spatial field: one row per component."""

    def __new__(cls, values: Union[np.ndarray, list]):
        data = np.array(values, dtype=float)
        if data.ndim == 1:
            data = data.reshape(1, -1)
        if data.ndim != 2:
            raise InvalidDimension(f"state field must be 2-dimensional, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvalidDimension("state field has non-finite entries")
        return data.view(cls)

    def __array_finalize__(self, obj):
        if obj is None:
            return

    @classmethod
    def zeros(cls, k: int, nx: int) -> "StateField":
        return cls(np.zeros((k, nx)))

    @property
    def k(self) -> int:
        "number of components"
        return self.shape[0]

    @property
    def nx(self) -> int:
        return self.shape[1]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Snapshots of a field at every knot of a time grid."""

    timegrid: TimeGrid
    #: array of shape (nt + 1, k, nx)
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[0] != self.timegrid.nt + 1:
            raise InvalidDimension(
                f"expected {self.timegrid.nt + 1} snapshots, "
                f"got array of shape {self.values.shape}"
            )

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, j: int) -> StateField:
        return self.values[j].view(StateField)

    @property
    def k(self) -> int:
        return self.values.shape[1]

    @property
    def initial(self) -> StateField:
        return self[0]

    @property
    def final(self) -> StateField:
        return self[-1]


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Control piecewise constant in time: ``values[j]`` acts on
    ``(t_j, t_{j+1}]`` and the control is zero after the horizon.

    Values are multiplied by the mask on construction, so a signal never
    acts outside ω.
    """

    timegrid: TimeGrid
    support: OmegaMask
    #: array of shape (nt, m, nx)
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        expected = (self.timegrid.nt, self.support.grid.nx)
        if values.ndim != 3 or (values.shape[0], values.shape[2]) != expected:
            raise InvalidDimension(
                f"control values must have shape ({expected[0]}, m, {expected[1]}), "
                f"got {values.shape}"
            )
        values *= self.support.mask
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, timegrid: TimeGrid, support: OmegaMask, m: int) -> "ControlSignal":
        return cls(timegrid, support, np.zeros((timegrid.nt, m, support.grid.nx)))

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def horizon(self) -> float:
        return self.timegrid.horizon

    def step_norms(self) -> np.ndarray:
        "spatial L² norm of the control on each time step"
        dx = self.support.grid.dx
        return np.sqrt(dx * np.sum(self.values**2, axis=(1, 2)))

    def inner(self, other: "ControlSignal") -> float:
        """``dt * Σ_j dx * Σ v_j w_j``"""
        dt = self.timegrid.dt
        dx = self.support.grid.dx
        return float(dt * dx * np.vdot(self.values, other.values))

    def norm(self) -> float:
        return float(np.sqrt(self.inner(self)))

    def active_fraction(self, threshold: float = 1e-12) -> float:
        """Fraction of time steps on which the control is not negligible."""
        return float(np.mean(self.step_norms() > threshold))

    def __add__(self, other: "ControlSignal") -> "ControlSignal":
        return ControlSignal(self.timegrid, self.support, self.values + other.values)

    def scaled(self, factor: float) -> "ControlSignal":
        return ControlSignal(self.timegrid, self.support, factor * self.values)

