"""
Implicit Euler solvers for coupled heat systems

    y_t - Δy + A y = χ_ω B u   in (0, L) × (0, T),   y = 0 on the boundary,

and for their adjoints. One step solves

    (I + dt (I_k ⊗ (-Δ_h) + A ⊗ I_nx)) y_{j+1} = y_j + dt χ_ω B u_j

with ``u_j`` the control on ``(t_j, t_{j+1}]``. The backward solver applies
the exact transpose of that step, so the discrete duality

    ⟨ψ_T, y(T; 0, u)⟩ = Σ_j dt ⟨u_j, χ_ω Bᵀ ψ_j⟩

holds to rounding error.
"""

import logging
from typing import Optional

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from syncctl.exceptions import InvalidDimension, LinearSolveFailure
from syncctl.fields import ControlSignal, StateField, Trajectory
from syncctl.grid import OmegaMask, SpatialGrid, TimeGrid

logger = logging.getLogger(__name__)


class ParabolicSystem:
    """Factored step operator for one coupling matrix, grid and time step.

    Immutable after construction; one instance can serve any number of
    forward and adjoint solves, including from several threads.
    """

    def __init__(
        self,
        A: np.ndarray,
        B: np.ndarray,
        grid: SpatialGrid,
        timegrid: TimeGrid,
        mask: Optional[OmegaMask] = None,
    ):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.asarray(B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
            raise InvalidDimension(f"incompatible shapes {A.shape} and {B.shape}")
        if mask is not None and mask.grid != grid:
            raise InvalidDimension("control mask belongs to a different grid")

        self.A = A
        self.B = B
        self.grid = grid
        self.timegrid = timegrid
        self.mask = mask

        k, nx, dt = self.k, grid.nx, timegrid.dt
        # component-major ordering: index c * nx + i
        step = sps.identity(k * nx, format="csc") + dt * (
            sps.kron(sps.identity(k), grid.stiffness())
            + sps.kron(sps.csr_matrix(A), sps.identity(nx))
        )
        try:
            self._lu = spla.splu(step.tocsc())
        except RuntimeError as err:
            raise LinearSolveFailure(f"step factorization failed: {err}") from err
        logger.debug("factored step operator: k=%d, nx=%d, dt=%g", k, nx, dt)

    @property
    def k(self) -> int:
        return self.A.shape[0]

    @property
    def l(self) -> int:  # noqa: E743
        "number of control components"
        return self.B.shape[1]

    def _solve(self, rhs: np.ndarray, step: int, trans: str = "N") -> np.ndarray:
        out = self._lu.solve(np.ascontiguousarray(rhs.ravel()), trans=trans)
        if not np.all(np.isfinite(out)):
            raise LinearSolveFailure(f"non-finite solution at step {step}", step=step)
        return out.reshape(rhs.shape)

    def _check_field(self, field: np.ndarray, name: str) -> np.ndarray:
        field = np.asarray(field, dtype=float)
        if field.shape != (self.k, self.grid.nx):
            raise InvalidDimension(
                f"{name} must have shape ({self.k}, {self.grid.nx}), got {field.shape}"
            )
        return field

    def forcing(self, u: np.ndarray) -> np.ndarray:
        "χ_ω B u for one time step of control values (l × nx)"
        return self.B @ (u * self.mask.mask)  # type: ignore[union-attr]

    def forward(
        self, y0: np.ndarray, control: Optional[ControlSignal] = None
    ) -> Trajectory:
        """March from ``y0`` over the time grid, driven by ``control``."""
        y = self._check_field(y0, "initial state")
        if control is not None:
            if self.mask is None:
                raise InvalidDimension("a control region is needed to apply a control")
            if control.timegrid != self.timegrid or control.m != self.l:
                raise InvalidDimension(
                    f"control with {control.m} components on {control.timegrid} "
                    f"does not match system with {self.l} on {self.timegrid}"
                )
        dt = self.timegrid.dt
        values = np.empty((self.timegrid.nt + 1, self.k, self.grid.nx))
        values[0] = y
        for j in range(self.timegrid.nt):
            rhs = values[j]
            if control is not None:
                rhs = rhs + dt * self.forcing(control.values[j])
            values[j + 1] = self._solve(rhs, j + 1)
        return Trajectory(self.timegrid, values)

    def adjoint(self, psi_T: np.ndarray) -> Trajectory:
        """Backward march from ``ψ(T) = psi_T`` with the transposed step:
        ``Mᵀ ψ_j = ψ_{j+1}``."""
        psi = self._check_field(psi_T, "terminal state")
        nt = self.timegrid.nt
        values = np.empty((nt + 1, self.k, self.grid.nx))
        values[nt] = psi
        for j in range(nt - 1, -1, -1):
            values[j] = self._solve(values[j + 1], j, trans="T")
        return Trajectory(self.timegrid, values)

    def observe(self, dual: Trajectory) -> ControlSignal:
        """Control-shaped observation ``χ_ω Bᵀ ψ_j`` of an adjoint trajectory.

        The control on ``(t_j, t_{j+1}]`` pairs with ``ψ_j``, the dual carried
        one implicit step back from ``t_{j+1}``.
        """
        if self.mask is None:
            raise InvalidDimension("a control region is needed to observe")
        values = np.einsum("kl,jkx->jlx", self.B, dual.values[:-1])
        return ControlSignal(dual.timegrid, self.mask, values)

    def final_state(
        self, y0: np.ndarray, control: Optional[ControlSignal] = None
    ) -> StateField:
        return self.forward(y0, control).final


def forward_solve(
    Asys: np.ndarray,
    Bsys: np.ndarray,
    y0: np.ndarray,
    control: Optional[ControlSignal],
    grid: SpatialGrid,
    timegrid: TimeGrid,
) -> Trajectory:
    """Solve ``y_t - Δy + Asys y = χ_ω Bsys u`` from ``y0``; ``control`` may be None."""
    mask = control.support if control is not None else None
    return ParabolicSystem(Asys, Bsys, grid, timegrid, mask).forward(y0, control)


def adjoint_solve(
    Asys_T: np.ndarray, psi_T: np.ndarray, grid: SpatialGrid, timegrid: TimeGrid
) -> Trajectory:
    """Solve ``ψ_t + Δψ - Asys_T ψ = 0`` backward from ``ψ(T) = psi_T``,
    where ``Asys_T`` is the transposed coupling."""
    Asys_T = np.atleast_2d(np.asarray(Asys_T, dtype=float))
    k = Asys_T.shape[0]
    system = ParabolicSystem(Asys_T.T, np.zeros((k, 1)), grid, timegrid)
    return system.adjoint(psi_T)


def observe(dual: Trajectory, Bsys: np.ndarray, mask: OmegaMask) -> ControlSignal:
    """``χ_ω Bsysᵀ ψ_j`` for every control interval of ``dual``."""
    Bsys = np.atleast_2d(np.asarray(Bsys, dtype=float))
    values = np.einsum("kl,jkx->jlx", Bsys, dual.values[:-1])
    return ControlSignal(dual.timegrid, mask, values)
