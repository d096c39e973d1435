"""
Spatial and temporal grids.

The spatial domain is the interval ``(0, L)`` with homogeneous Dirichlet
conditions, discretized at the interior nodes ``x_i = i * dx``. Everything
that depends on the spatial dimension (node layout, the discrete ``-Δ``,
quadrature weights) lives on :class:`SpatialGrid`, so a tensor-grid
rectangle only needs another grid class with the same interface.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence, Tuple

import numpy as np
import scipy.sparse as sps

from syncctl.exceptions import EmptyControlRegion, InvalidDimension


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid of ``nx`` interior nodes on ``(0, length)``."""

    length: float
    nx: int

    def __post_init__(self):
        if not self.length > 0:
            raise InvalidDimension(f"domain length must be positive, got {self.length}")
        if self.nx < 3:
            raise InvalidDimension(f"need at least 3 interior nodes, got {self.nx}")

    @property
    def dx(self) -> float:
        return self.length / (self.nx + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        "interior node coordinates"
        return self.dx * np.arange(1, self.nx + 1)

    def stiffness(self) -> sps.csr_matrix:
        """Discrete ``-Δ``: tridiag(-1, 2, -1) / dx², Dirichlet at both ends."""
        main = np.full(self.nx, 2.0)
        off = np.full(self.nx - 1, -1.0)
        return sps.diags([off, main, off], [-1, 0, 1], format="csr") / self.dx**2

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """Discrete L² inner product ``dx * Σ f_i g_i`` (summed over components)."""
        return float(self.dx * np.vdot(np.asarray(f), np.asarray(g)))

    def norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(self.inner(f, f)))


@dataclass(frozen=True)
class TimeGrid:
    """``nt`` uniform steps on ``[0, horizon]``."""

    horizon: float
    nt: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise InvalidDimension(f"time horizon must be positive, got {self.horizon}")
        if self.nt < 1:
            raise InvalidDimension(f"need at least one time step, got {self.nt}")

    @property
    def dt(self) -> float:
        return self.horizon / self.nt

    @property
    def knots(self) -> np.ndarray:
        return self.dt * np.arange(self.nt + 1)


@dataclass(frozen=True, eq=False)
class OmegaMask:
    """Indicator of the control region ω on a spatial grid."""

    grid: SpatialGrid
    intervals: Tuple[Tuple[float, float], ...]
    mask: np.ndarray = field(repr=False)

    @property
    def count(self) -> int:
        "number of nodes inside ω"
        return int(self.mask.sum())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OmegaMask):
            return NotImplemented
        return self.grid == other.grid and self.intervals == other.intervals


def build_grid(length: float, nx: int) -> SpatialGrid:
    return SpatialGrid(float(length), int(nx))


def build_time_grid(T: float, nt: int) -> TimeGrid:
    return TimeGrid(float(T), int(nt))


def omega_mask(
    grid: SpatialGrid, intervals: Iterable[Sequence[float]]
) -> OmegaMask:
    """Mask of the nodes lying in the union of the open ``intervals``."""
    spans = tuple((float(a), float(b)) for a, b in intervals)
    if not spans:
        raise EmptyControlRegion("no control intervals given")
    mask = np.zeros(grid.nx)
    for a, b in spans:
        if not 0 <= a < b <= grid.length:
            raise InvalidDimension(
                f"control interval ({a}, {b}) is not inside (0, {grid.length})"
            )
        mask[(grid.nodes > a) & (grid.nodes < b)] = 1.0
    if not mask.any():
        raise EmptyControlRegion(
            f"no grid node falls in the control region {list(spans)}"
        )
    mask.setflags(write=False)
    return OmegaMask(grid, spans, mask)
