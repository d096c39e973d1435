"""
Minimal-time synchronization with a control-norm budget ``M``.

The minimal time ``T*`` is characterized by ``N(T*, y0) = M``, where
``N(·, y0)`` is the strictly decreasing minimal-norm function; ``T*`` is
found by bisection on ``N(T, y0) - M`` and the optimal control is the
minimal-norm control at ``T*``, extended by zero. An optimal control exists
only when ``M`` exceeds ``M(y0) = lim N(T, y0)`` as ``T → ∞``; that limit
is bounded above by ``N(T_max, y0)``.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple, Union

import numpy as np

from syncctl.algebra import Hypothesis, SyncStructure
from syncctl.exceptions import BracketFailure, ValidationError
from syncctl.fields import ControlSignal
from syncctl.grid import OmegaMask, SpatialGrid, build_time_grid
from syncctl.hum import (
    NT_REF,
    ControlProblem,
    HumOptions,
    MinNormResult,
    solve_min_norm,
)
from syncctl.parallel import parallel_map
from syncctl.pde import ParabolicSystem

logger = logging.getLogger(__name__)


class MinTimeStatus(Enum):
    """Outcome of :func:`solve_min_time`."""

    #: y0 is already synchronized; the optimal time is 0
    TRIVIAL_ZERO = "TrivialZero"
    #: M does not exceed the limit norm, no optimal control exists
    NO_OPTIMAL_CONTROL = "NoOptimalControl"
    SOLVED = "Solved"
    NOT_SYNCHRONIZABLE = "NotSynchronizable"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class MinTimeOptions:
    T_lo: float = 1e-2
    T_hi: float = 2.0
    #: stop when the bracket is narrower than ``bisect_tol * T_hi`` ...
    bisect_tol: float = 1e-3
    #: ... and ``|N(T*) - M| <= norm_tol * M``
    norm_tol: float = 1e-4
    T_max: float = 8.0
    nt_ref: int = NT_REF
    #: relative distance to the limit estimate below which existence is inconclusive
    borderline: float = 0.05
    max_iter: int = 60

    def __post_init__(self):
        if not 0 < self.T_lo < self.T_max:
            raise ValidationError("mintime.T_lo", "must satisfy 0 < T_lo < T_max")
        if not self.T_hi > self.T_lo:
            raise ValidationError("mintime.T_hi", "must exceed T_lo")
        if not 0 < self.bisect_tol < 1:
            raise ValidationError("mintime.bisect_tol", "must be in (0, 1)")
        if not 0 < self.norm_tol < 1:
            raise ValidationError("mintime.norm_tol", "must be in (0, 1)")
        if self.nt_ref < 1:
            raise ValidationError("time.nt_ref", "must be at least 1")


@dataclass(frozen=True)
class LimitEstimate:
    """Upper estimate ``N(T_max, y0)`` of ``M(y0)``."""

    value: float
    T_max: float
    #: |N(T_max) - N(T_max/2)| / N(T_max/2); large means the curve has not flattened
    gap: float
    converged: bool = True

    @property
    def reliable(self) -> bool:
        return self.gap < 0.1


@dataclass(frozen=True, eq=False)
class MinTimeResult:
    status: MinTimeStatus
    M: float
    #: optimal time; 0 for TrivialZero, None when no optimal control exists
    T_star: Optional[float] = None
    #: optimal control on (0, T*), zero afterwards; None when identically zero or absent
    control: Optional[ControlSignal] = None
    achieved_norm: float = 0.0
    M_limit_estimate: float = 0.0
    limit_gap: float = 0.0
    bisection_iters: int = 0
    #: M within ``borderline`` of the limit estimate
    inconclusive: bool = False
    min_norm: Optional[MinNormResult] = None
    #: (T_lo, N(T_lo), T_hi, N(T_hi)) after every bisection step
    brackets: List[Tuple[float, float, float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "status": str(self.status),
            "M": self.M,
            "T_star": self.T_star,
            "achieved_norm": self.achieved_norm,
            "M_limit_estimate": self.M_limit_estimate,
            "limit_gap": self.limit_gap,
            "bisection_iters": self.bisection_iters,
            "inconclusive": self.inconclusive,
            "min_norm": None if self.min_norm is None else self.min_norm.to_dict(),
        }


def _already_synchronized(structure: SyncStructure, y0: np.ndarray) -> bool:
    y0 = np.asarray(y0, dtype=float)
    if structure.hypothesis is Hypothesis.H1:
        return not np.any(structure.D @ y0)
    return not np.any(y0)


class _NormFunction:
    """``T ↦ N(T, y0)`` with warm starts from the nearest solved horizon."""

    def __init__(
        self,
        structure: SyncStructure,
        y0: np.ndarray,
        grid: SpatialGrid,
        mask: OmegaMask,
        nt_ref: int,
        hum_options: Optional[HumOptions],
    ):
        self.structure = structure
        self.y0 = y0
        self.grid = grid
        self.mask = mask
        self.nt_ref = nt_ref
        self.hum_options = hum_options
        self.solved: dict = {}

    def solve_cold(self, T: float) -> MinNormResult:
        """Solve from a zero initial guess without touching the cache,
        so it can run on a worker thread."""
        problem = ControlProblem.build(self.structure, self.grid, self.mask, T, self.nt_ref)
        return solve_min_norm(problem, self.y0, self.hum_options)

    def solve(self, T: float) -> MinNormResult:
        if T in self.solved:
            return self.solved[T]
        guess = None
        if self.solved:
            nearest = min(self.solved, key=lambda s: abs(math.log(s / T)))
            guess = self.solved[nearest].psi_T
        problem = ControlProblem.build(self.structure, self.grid, self.mask, T, self.nt_ref)
        result = solve_min_norm(problem, self.y0, self.hum_options, initial_guess=guess)
        self.solved[T] = result
        return result

    def __call__(self, T: float) -> float:
        return self.solve(T).norm_value


def estimate_limit_norm(
    structure: SyncStructure,
    y0: np.ndarray,
    grid: SpatialGrid,
    mask: OmegaMask,
    T_max: float = 8.0,
    hum_options: Optional[HumOptions] = None,
    nt_ref: int = NT_REF,
    workers: Optional[int] = None,
) -> LimitEstimate:
    """``N(T_max, y0)``, an upper bound for ``M(y0)`` since ``N`` decreases."""
    if not T_max > 0:
        raise ValidationError("mintime.T_max", "must be positive")
    if _already_synchronized(structure, y0):
        return LimitEstimate(0.0, T_max, 0.0)

    def evaluate(T: float) -> MinNormResult:
        problem = ControlProblem.build(structure, grid, mask, T, nt_ref)
        return solve_min_norm(problem, y0, hum_options)

    half, full = parallel_map(evaluate, [T_max / 2, T_max], workers)
    gap = abs(full.norm_value - half.norm_value) / half.norm_value if half.norm_value else 0.0
    if gap >= 0.1:
        logger.info(
            "limit norm estimate at T_max=%g may be loose (relative gap %.3f)", T_max, gap
        )
    return LimitEstimate(
        full.norm_value, T_max, gap, converged=half.converged and full.converged
    )


def solve_min_time(
    M: float,
    structure: SyncStructure,
    y0: np.ndarray,
    grid: SpatialGrid,
    mask: OmegaMask,
    options: Optional[MinTimeOptions] = None,
    hum_options: Optional[HumOptions] = None,
    workers: Optional[int] = None,
) -> MinTimeResult:
    """Shortest horizon on which ``y0`` can be synchronized with control norm ``≤ M``."""
    options = options or MinTimeOptions()
    if not M > 0:
        raise ValidationError("mintime.M", f"must be positive, got {M}")
    if not structure.synchronizable:
        return MinTimeResult(MinTimeStatus.NOT_SYNCHRONIZABLE, M)
    if _already_synchronized(structure, y0):
        return MinTimeResult(MinTimeStatus.TRIVIAL_ZERO, M, T_star=0.0)

    limit = estimate_limit_norm(
        structure, y0, grid, mask, options.T_max, hum_options, options.nt_ref, workers
    )
    inconclusive = abs(M - limit.value) <= options.borderline * limit.value
    if inconclusive:
        logger.warning(
            "M=%g is within %.0f%% of the limit norm estimate %g; existence is inconclusive",
            M,
            100 * options.borderline,
            limit.value,
        )
    if M <= limit.value:
        return MinTimeResult(
            MinTimeStatus.NO_OPTIMAL_CONTROL,
            M,
            M_limit_estimate=limit.value,
            limit_gap=limit.gap,
            inconclusive=inconclusive,
        )

    norm = _NormFunction(structure, y0, grid, mask, options.nt_ref, hum_options)
    T_lo, T_hi = options.T_lo, min(options.T_hi, options.T_max)
    probes = [T_lo, T_hi]
    for T, result in zip(probes, parallel_map(norm.solve_cold, probes, workers)):
        norm.solved[T] = result

    while norm(T_hi) >= M:
        if T_hi >= options.T_max:
            raise BracketFailure(
                f"N(T_hi={T_hi:g}) = {norm(T_hi):.6e} does not drop below M={M:g}",
                T_hi,
                norm(T_hi),
            )
        T_hi = min(2 * T_hi, options.T_max)
        logger.debug("expanding upper bracket to %g", T_hi)
    while norm(T_lo) <= M:
        T_lo /= 2
        if T_lo < 1e-8:
            raise BracketFailure(
                f"N stays below M={M:g} down to T={T_lo:g}", T_hi, norm(T_hi)
            )
        logger.debug("shrinking lower bracket to %g", T_lo)

    brackets = [(T_lo, norm(T_lo), T_hi, norm(T_hi))]
    iterations = 0
    T_star = 0.5 * (T_lo + T_hi)
    while True:
        T_star = 0.5 * (T_lo + T_hi)
        N_star = norm(T_star)
        iterations += 1
        if N_star > M:
            T_lo = T_star
        else:
            T_hi = T_star
        brackets.append((T_lo, norm(T_lo), T_hi, norm(T_hi)))
        logger.debug(
            "bisection %d: T in [%.8g, %.8g], N(T_mid)=%.10e", iterations, T_lo, T_hi, N_star
        )
        narrow = T_hi - T_lo <= options.bisect_tol * T_hi
        if narrow and abs(N_star - M) <= options.norm_tol * M:
            break
        if iterations >= options.max_iter:
            logger.warning("bisection stopped after %d iterations", iterations)
            break

    best = norm.solve(T_star)
    return MinTimeResult(
        MinTimeStatus.SOLVED,
        M,
        T_star=T_star,
        control=best.control,
        achieved_norm=best.norm_value,
        M_limit_estimate=limit.value,
        limit_gap=limit.gap,
        bisection_iters=iterations,
        inconclusive=inconclusive,
        min_norm=best,
        brackets=brackets,
    )


@dataclass(frozen=True)
class VerificationReport:
    """Forward check of a computed control on the full coupled system."""

    hypothesis: Hypothesis
    horizon: float
    #: ‖Dy(T)‖/‖Dy0‖ under H1, ‖y(T)‖/‖y0‖ under H2
    sync_residual: float
    #: largest relative residual on [T, T + post_horizon] with zero control
    persistence_residual: float
    #: ‖z(T; Dy0, u)‖/‖Dy0‖ of the reduced system (H1 only)
    reduced_residual: Optional[float]
    control_norm: float
    #: M for minimal-time results, N for minimal-norm results
    target_norm: float
    norm_error: float
    #: ‖u‖ <= M (within the bisection's norm tolerance); None for minimal-norm results
    constraint_satisfied: Optional[bool]
    #: (t, relative residual) on [0, T + post_horizon]
    series: Tuple[Tuple[float, float], ...] = ()

    def to_dict(self) -> dict:
        return {
            "hypothesis": str(self.hypothesis),
            "horizon": self.horizon,
            "sync_residual": self.sync_residual,
            "persistence_residual": self.persistence_residual,
            "reduced_residual": self.reduced_residual,
            "control_norm": self.control_norm,
            "target_norm": self.target_norm,
            "norm_error": self.norm_error,
            "constraint_satisfied": self.constraint_satisfied,
        }


def verify_solution(
    result: Union[MinTimeResult, MinNormResult],
    structure: SyncStructure,
    y0: np.ndarray,
    grid: SpatialGrid,
    mask: OmegaMask,
    post_horizon: float = 0.5,
    post_steps: Optional[int] = None,
    norm_tol: float = 1e-3,
) -> VerificationReport:
    """Apply the control of ``result`` to the full system and measure how
    well (and how persistently) the state is synchronized."""
    y0 = np.asarray(y0, dtype=float)
    pair = structure.pair
    if structure.hypothesis is Hypothesis.H1:
        def measure(y: np.ndarray) -> float:
            return grid.norm(structure.D @ y)
    else:
        def measure(y: np.ndarray) -> float:
            return grid.norm(y)

    scale = measure(y0) or 1.0
    control = result.control
    if isinstance(result, MinTimeResult):
        target_norm = result.M
    else:
        target_norm = result.norm_value
    control_norm = control.norm() if control is not None else 0.0

    series: List[Tuple[float, float]] = []
    state = y0
    horizon = 0.0
    reduced_residual = None
    if control is not None:
        timegrid = control.timegrid
        horizon = timegrid.horizon
        full = ParabolicSystem(pair.A, pair.B, grid, timegrid, mask).forward(y0, control)
        series.extend(
            (float(t), measure(full.values[j]) / scale) for j, t in enumerate(timegrid.knots)
        )
        state = full.values[-1]
        if structure.hypothesis is Hypothesis.H1:
            reduced = ControlProblem(structure, grid, timegrid, mask)
            z_T = reduced.system.final_state(reduced.project(y0), control)
            reduced_residual = grid.norm(z_T) / scale
    else:
        series.append((0.0, measure(y0) / scale))
    sync_residual = series[-1][1]

    persistence = sync_residual
    if post_horizon > 0:
        if post_steps is None:
            dt = control.timegrid.dt if control is not None else post_horizon / 100
            post_steps = max(1, int(math.ceil(post_horizon / dt - 1e-9)))
        post_grid = build_time_grid(post_horizon, post_steps)
        drift = ParabolicSystem(pair.A, pair.B, grid, post_grid).forward(state)
        tail = [measure(drift.values[j]) / scale for j in range(1, post_grid.nt + 1)]
        series.extend(
            (horizon + float(t), r) for t, r in zip(post_grid.knots[1:], tail)
        )
        persistence = max([sync_residual, *tail])

    norm_error = abs(control_norm - target_norm) / target_norm if target_norm else control_norm
    constraint = None
    if isinstance(result, MinTimeResult):
        constraint = control_norm <= result.M * (1 + norm_tol)

    return VerificationReport(
        hypothesis=structure.hypothesis,
        horizon=horizon,
        sync_residual=sync_residual,
        persistence_residual=persistence,
        reduced_residual=reduced_residual,
        control_norm=control_norm,
        target_norm=target_norm,
        norm_error=norm_error,
        constraint_satisfied=constraint,
        series=tuple(series),
    )
