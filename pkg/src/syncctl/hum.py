"""
Minimal-norm synchronizing controls.

Under H1 the problem is posed on the reduced system for ``z = Dy``
(coupling ``Ã``, control matrix ``DB``, initial state ``Dy0``); under H2 on
the full system (coupling ``A``, control matrix ``B``, initial state
``y0``). In both cases the minimal-norm control is the observation
``χ_ω Bsysᵀ ψ`` of the adjoint trajectory whose terminal state minimizes
the dual functional

    J(ψ_T) = ½ ∫ ‖χ_ω Bsysᵀ ψ‖² dt + ⟨ψ(0), z0⟩,

found by conjugate gradients on ``(G + εI) ψ_T = -z_free(T)`` with the
Gramian ``G`` applied matrix-free.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from syncctl.algebra import Hypothesis, SyncStructure
from syncctl.exceptions import (
    InvalidDimension,
    NotConverged,
    NotSynchronizable,
    ValidationError,
)
from syncctl.fields import ControlSignal, StateField, Trajectory
from syncctl.grid import OmegaMask, SpatialGrid, TimeGrid, build_time_grid
from syncctl.parallel import parallel_map
from syncctl.pde import ParabolicSystem

logger = logging.getLogger(__name__)

#: default number of time steps per horizon for curves and bisection
NT_REF: int = 200


class ControlProblem:
    """The system on which the minimal-norm problem is solved for one horizon.

    Branch selection follows the classification and is never re-derived here.
    """

    def __init__(
        self,
        structure: SyncStructure,
        grid: SpatialGrid,
        timegrid: TimeGrid,
        mask: OmegaMask,
    ):
        if structure.hypothesis is Hypothesis.H1:
            Asys = structure.A_reduced
            Bsys = structure.D @ structure.pair.B
        elif structure.hypothesis is Hypothesis.H2:
            Asys = structure.pair.A
            Bsys = structure.pair.B
        else:
            raise NotSynchronizable(
                f"pair is not synchronizable "
                f"(rank {structure.rank_value} of {structure.rank_target})"
            )
        self.structure = structure
        self.system = ParabolicSystem(Asys, Bsys, grid, timegrid, mask)

    @classmethod
    def build(
        cls,
        structure: SyncStructure,
        grid: SpatialGrid,
        mask: OmegaMask,
        T: float,
        nt: int = NT_REF,
    ) -> "ControlProblem":
        return cls(structure, grid, build_time_grid(T, nt), mask)

    @property
    def hypothesis(self) -> Hypothesis:
        return self.structure.hypothesis

    @property
    def grid(self) -> SpatialGrid:
        return self.system.grid

    @property
    def timegrid(self) -> TimeGrid:
        return self.system.timegrid

    @property
    def mask(self) -> OmegaMask:
        return self.system.mask  # type: ignore[return-value]

    @property
    def k(self) -> int:
        "components of the operating state (n-1 under H1, n under H2)"
        return self.system.k

    def project(self, y0: np.ndarray) -> StateField:
        """Initial state of the operating system: ``Dy0`` under H1, ``y0`` under H2."""
        y0 = np.asarray(y0, dtype=float)
        n = self.structure.pair.n
        if y0.shape != (n, self.grid.nx):
            raise InvalidDimension(
                f"initial state must have shape ({n}, {self.grid.nx}), got {y0.shape}"
            )
        if self.hypothesis is Hypothesis.H1:
            return StateField(self.structure.D @ y0)
        return StateField(y0)

    def measure(self, y: np.ndarray) -> float:
        """Distance of a full state from the target:
        ``‖Dy‖`` under H1, ``‖y‖`` under H2."""
        if self.hypothesis is Hypothesis.H1:
            return self.grid.norm(self.structure.D @ np.asarray(y))
        return self.grid.norm(y)

    def zero_dual(self) -> StateField:
        return StateField.zeros(self.k, self.grid.nx)


def free_drift_final(problem: ControlProblem, y0: np.ndarray) -> StateField:
    """Uncontrolled final state ``z_free(T)`` (``y_free(T)`` under H2)."""
    return problem.system.final_state(problem.project(y0))


def dual_control(
    problem: ControlProblem, psi_T: np.ndarray
) -> Tuple[ControlSignal, Trajectory]:
    """Observed adjoint ``χ_ω Bsysᵀ ψ(·; T, psi_T)`` and the adjoint trajectory."""
    dual = problem.system.adjoint(psi_T)
    return problem.system.observe(dual), dual


def gramian_apply(problem: ControlProblem, psi_T: np.ndarray) -> StateField:
    """``G ψ_T``: final state reached from zero under the observed dual."""
    control, _ = dual_control(problem, psi_T)
    return problem.system.final_state(problem.zero_dual(), control)


def eval_dual_functional(
    problem: ControlProblem, psi_T: np.ndarray, y0: np.ndarray
) -> float:
    """``J(ψ_T) = ½‖χ_ω Bsysᵀ ψ‖² + ⟨ψ(0), z0⟩``"""
    control, dual = dual_control(problem, psi_T)
    return 0.5 * control.norm() ** 2 + problem.grid.inner(dual[0], problem.project(y0))


def grad_dual_functional(
    problem: ControlProblem, psi_T: np.ndarray, y0: np.ndarray
) -> StateField:
    """Gradient of :func:`eval_dual_functional`: ``G ψ_T + z_free(T)``."""
    return StateField(gramian_apply(problem, psi_T) + free_drift_final(problem, y0))


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    #: relative residual target reached
    converged: bool
    residual_norms: List[float] = field(default_factory=list)
    #: value of ½⟨Ax, x⟩ - ⟨b, x⟩ after each iteration
    objective_values: List[float] = field(default_factory=list)
    stagnated: bool = False


def conjugate_gradient(
    apply: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    inner: Callable[[np.ndarray, np.ndarray], float],
    tol: float,
    max_iter: int,
    shift: float = 0.0,
    x0: Optional[np.ndarray] = None,
    stall_window: int = 25,
) -> CGResult:
    """Conjugate gradients for ``(apply + shift·I) x = b`` in the inner product ``inner``.

    Stops when ``‖r‖ ≤ tol‖b‖``, after ``max_iter`` iterations, or when the
    residual norm has not reached a new minimum for ``stall_window``
    iterations.
    """

    def operator(v: np.ndarray) -> np.ndarray:
        return apply(v) + shift * v

    b_norm = np.sqrt(inner(b, b))
    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.array(x0, dtype=float)
        r = b - operator(x)
    p = r.copy()
    rr = inner(r, r)
    result = CGResult(x=x, iterations=0, converged=bool(np.sqrt(rr) <= tol * b_norm))
    best, since_best = rr, 0

    while not result.converged and result.iterations < max_iter:
        Ap = operator(p)
        pAp = inner(p, Ap)
        if pAp <= 0:
            logger.warning("CG breakdown: non-positive curvature %.3e", pAp)
            break
        alpha = rr / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        rr_new = inner(r, r)
        result.iterations += 1

        objective = -0.5 * (inner(b, x) + inner(r, x))
        result.x = x
        result.residual_norms.append(float(np.sqrt(rr_new)))
        result.objective_values.append(float(objective))
        logger.debug(
            "CG iteration %d: residual %.3e, objective %.6e",
            result.iterations,
            np.sqrt(rr_new) / b_norm,
            objective,
        )
        if np.sqrt(rr_new) <= tol * b_norm:
            result.converged = True
            break
        if rr_new < best:
            best, since_best = rr_new, 0
        else:
            since_best += 1
        if since_best >= stall_window:
            result.stagnated = True
            logger.debug(
                "CG residual stalled for %d iterations at %d", stall_window, result.iterations
            )
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    return result


@dataclass(frozen=True)
class HumOptions:
    """Solver settings for :func:`solve_min_norm`."""

    #: relative residual tolerance of each CG pass
    cg_tol: float = 1e-10
    cg_max_iter: int = 500
    #: fixed Tikhonov parameter; None scales it to the Gramian (``eps_scale`` ×
    #: Rayleigh quotient) and follows the regularized pass with an unshifted one
    eps_reg: Optional[float] = None
    #: acceptable final-state norm; None means ``target_scale * ‖z0‖``
    target_tol: Optional[float] = None
    eps_scale: float = 1e-10
    target_scale: float = 1e-6

    def __post_init__(self):
        if not 0 < self.cg_tol < 1:
            raise ValidationError("solver.cg_tol", f"must be in (0, 1), got {self.cg_tol}")
        if self.cg_max_iter < 1:
            raise ValidationError(
                "solver.cg_max_iter", f"must be at least 1, got {self.cg_max_iter}"
            )
        if self.eps_reg is not None and self.eps_reg < 0:
            raise ValidationError("solver.eps_reg", f"must be >= 0, got {self.eps_reg}")
        if self.target_tol is not None and not self.target_tol > 0:
            raise ValidationError(
                "solver.target_tol", f"must be positive, got {self.target_tol}"
            )

    def to_dict(self) -> dict:
        return {
            "cg_tol": self.cg_tol,
            "cg_max_iter": self.cg_max_iter,
            "eps_reg": self.eps_reg,
            "target_tol": self.target_tol,
        }


@dataclass(frozen=True, eq=False)
class MinNormResult:
    """Discrete minimal-norm control and its diagnostics."""

    hypothesis: Hypothesis
    control: ControlSignal
    #: discrete N(T, y0) = ‖control‖
    norm_value: float
    #: final-state norm ‖z(T; z0, v*)‖ of the operating system
    residual: float
    #: minimizing terminal dual ψ_T*
    psi_T: StateField
    #: ψ*(0)
    psi0: StateField
    iterations: int
    converged: bool
    eps_reg: float
    target_tol: float
    #: ‖z0‖ (‖Dy0‖ under H1, ‖y0‖ under H2)
    initial_norm: float
    #: ⟨ψ*(0), z0⟩
    pairing: float
    objective_history: List[float] = field(default_factory=list)

    @property
    def horizon(self) -> float:
        return self.control.horizon

    @property
    def relative_residual(self) -> float:
        return self.residual / self.initial_norm if self.initial_norm else self.residual

    @property
    def dual_value(self) -> float:
        "J(ψ*) = ½N² + ⟨ψ*(0), z0⟩; equals -½N² at the exact minimizer"
        return 0.5 * self.norm_value**2 + self.pairing

    @property
    def identity_gap(self) -> float:
        "N² + ⟨ψ*(0), z0⟩, zero at the exact minimizer"
        return self.norm_value**2 + self.pairing

    @property
    def active_fraction(self) -> float:
        return self.control.active_fraction()

    @property
    def noise_estimate(self) -> float:
        """Size of the error in ``norm_value`` attributable to the solver:
        identity gap plus regularization bias, scaled to a norm."""
        if self.norm_value == 0:
            return 0.0
        psi_sq = float(self.control.support.grid.dx * np.sum(np.asarray(self.psi_T) ** 2))
        return (abs(self.identity_gap) + self.eps_reg * psi_sq) / self.norm_value

    def to_dict(self) -> dict:
        return {
            "hypothesis": str(self.hypothesis),
            "T": self.horizon,
            "norm": self.norm_value,
            "residual": self.residual,
            "relative_residual": self.relative_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "eps_reg": self.eps_reg,
            "target_tol": self.target_tol,
            "dual_value": self.dual_value,
            "identity_gap": self.identity_gap,
            "active_fraction": self.active_fraction,
            "noise_estimate": self.noise_estimate,
        }


def _trivial_result(problem: ControlProblem, initial_norm: float) -> MinNormResult:
    zero = problem.zero_dual()
    return MinNormResult(
        hypothesis=problem.hypothesis,
        control=ControlSignal.zeros(problem.timegrid, problem.mask, problem.system.l),
        norm_value=0.0,
        residual=0.0,
        psi_T=zero,
        psi0=zero,
        iterations=0,
        converged=True,
        eps_reg=0.0,
        target_tol=0.0,
        initial_norm=initial_norm,
        pairing=0.0,
    )


def solve_min_norm(
    problem: ControlProblem,
    y0: np.ndarray,
    options: Optional[HumOptions] = None,
    initial_guess: Optional[np.ndarray] = None,
    strict: bool = False,
) -> MinNormResult:
    """Minimal-norm control synchronizing ``y0`` at the problem's horizon.

    Returns the best iterate with ``converged=False`` when the final-state
    residual stays above the target; with ``strict=True`` raises
    :class:`~syncctl.exceptions.NotConverged` carrying that result instead.
    """
    options = options or HumOptions()
    system, grid = problem.system, problem.grid
    z0 = problem.project(y0)
    initial_norm = grid.norm(z0)
    z_free = system.final_state(z0)
    if not np.any(z_free):
        logger.info("initial state already synchronized; zero control is optimal")
        return _trivial_result(problem, initial_norm)

    b = -np.asarray(z_free)

    def apply(psi: np.ndarray) -> np.ndarray:
        return np.asarray(gramian_apply(problem, psi))

    eps = options.eps_reg
    if eps is None:
        eps = options.eps_scale * grid.inner(apply(b), b) / grid.inner(b, b)
    delta = options.target_tol or options.target_scale * initial_norm

    cg = conjugate_gradient(
        apply,
        b,
        grid.inner,
        tol=options.cg_tol,
        max_iter=options.cg_max_iter,
        shift=eps,
        x0=initial_guess,
    )
    iterations, history = cg.iterations, list(cg.objective_values)
    remaining = options.cg_max_iter - iterations
    if options.eps_reg is None and eps > 0 and remaining > 0:
        # drop the shift, restarting from the regularized minimizer
        polish = conjugate_gradient(
            apply, b, grid.inner, tol=options.cg_tol, max_iter=remaining, x0=cg.x
        )
        logger.debug(
            "unregularized pass: %d iterations, converged %s",
            polish.iterations,
            polish.converged,
        )
        iterations += polish.iterations
        history += polish.objective_values
        cg, eps = polish, 0.0
    psi_T = StateField(cg.x)
    control, dual = dual_control(problem, psi_T)
    residual = grid.norm(system.final_state(z0, control))

    result = MinNormResult(
        hypothesis=problem.hypothesis,
        control=control,
        norm_value=control.norm(),
        residual=residual,
        psi_T=psi_T,
        psi0=dual[0],
        iterations=iterations,
        converged=residual <= delta,
        eps_reg=eps,
        target_tol=delta,
        initial_norm=initial_norm,
        pairing=grid.inner(dual[0], z0),
        objective_history=history,
    )
    logger.info(
        "T=%g: N=%.10e, residual %.3e (target %.3e) after %d CG iterations",
        problem.timegrid.horizon,
        result.norm_value,
        residual,
        delta,
        iterations,
    )
    if not result.converged:
        message = (
            f"final-state residual {residual:.3e} above target {delta:.3e} "
            f"after {iterations} iterations at T={problem.timegrid.horizon}"
        )
        logger.warning(message)
        if strict:
            raise NotConverged(message, result)
    return result


@dataclass(frozen=True)
class NormCurvePoint:
    T: float
    N: float
    converged: bool
    iterations: int
    noise: float = 0.0


def norm_curve(
    structure: SyncStructure,
    T_values: Sequence[float],
    y0: np.ndarray,
    grid: SpatialGrid,
    mask: OmegaMask,
    options: Optional[HumOptions] = None,
    nt_ref: int = NT_REF,
    workers: Optional[int] = None,
) -> List[NormCurvePoint]:
    """``N(T, y0)`` on each horizon, each with ``nt_ref`` time steps."""
    horizons = [float(T) for T in T_values]
    if any(T <= 0 for T in horizons):
        raise ValidationError("time.T_values", "horizons must be positive")
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ValidationError("time.T_values", "horizons must be strictly increasing")
    if any(b < 1.1 * a for a, b in zip(horizons, horizons[1:])):
        logger.warning("horizons closer than 10%%; differences may be below solver noise")

    def evaluate(T: float) -> NormCurvePoint:
        problem = ControlProblem.build(structure, grid, mask, T, nt_ref)
        result = solve_min_norm(problem, y0, options)
        return NormCurvePoint(
            T, result.norm_value, result.converged, result.iterations, result.noise_estimate
        )

    return parallel_map(evaluate, horizons, workers)


def observability_ratio(problem: ControlProblem, psi_T: np.ndarray) -> float:
    """``‖ψ(0)‖² / ∫‖χ_ω Bsysᵀ ψ‖² dt`` for one terminal dual; bounded by
    the observability constant of the horizon."""
    control, dual = dual_control(problem, psi_T)
    observed = control.norm() ** 2
    initial = problem.grid.norm(dual[0]) ** 2
    if observed == 0:
        return float("inf") if initial > 0 else 0.0
    return initial / observed


def estimate_observability_constant(
    problem: ControlProblem, samples: int = 8, seed: int = 0, modes: int = 3
) -> float:
    """Largest :func:`observability_ratio` over seeded random terminal duals
    and the first sine modes of each component: a lower bound for the
    observability constant."""
    rng = np.random.default_rng(seed)
    grid = problem.grid
    candidates = [rng.standard_normal((problem.k, grid.nx)) for _ in range(samples)]
    for c in range(problem.k):
        for mode in range(1, modes + 1):
            psi = np.zeros((problem.k, grid.nx))
            psi[c] = np.sin(mode * np.pi * grid.nodes / grid.length)
            candidates.append(psi)
    return max(observability_ratio(problem, psi) for psi in candidates)
