"""
Command dispatch: each command runs the solvers for one configuration and
collects everything the writers need into a :class:`RunReport`.

Exit codes: 0 success (a verdict of no optimal control is a valid answer),
1 usage or configuration error, 2 not synchronizable, 3 solver failure.
"""

import logging
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from syncctl.algebra import Hypothesis, SyncStructure, classify
from syncctl.config.schema import ProblemConfig
from syncctl.exceptions import (
    BracketFailure,
    LinearSolveFailure,
    NotConverged,
    ValidationError,
)
from syncctl.fields import ControlSignal, Trajectory
from syncctl.grid import OmegaMask, SpatialGrid, build_time_grid
from syncctl.hum import (
    ControlProblem,
    MinNormResult,
    NormCurvePoint,
    estimate_observability_constant,
    norm_curve,
    solve_min_norm,
)
from syncctl.mintime import (
    MinTimeResult,
    MinTimeStatus,
    VerificationReport,
    solve_min_time,
    verify_solution,
)
from syncctl.pde import ParabolicSystem
from syncctl.writers.tables import read_control

logger = logging.getLogger(__name__)

COMMANDS = ("classify", "simulate", "min-norm", "norm-curve", "min-time")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_SYNCHRONIZABLE = 2
EXIT_SOLVER_FAILURE = 3


@dataclass(eq=False)
class RunReport:
    """Everything one command produced."""

    command: str
    config_hash: str
    grid: SpatialGrid
    mask: OmegaMask
    classification: Optional[SyncStructure] = None
    exit_code: int = EXIT_OK
    message: str = ""
    min_norm: Optional[MinNormResult] = None
    min_time: Optional[MinTimeResult] = None
    curve: Optional[List[NormCurvePoint]] = None
    verification: Optional[VerificationReport] = None
    #: full-system trajectory exported to trajectory.csv
    trajectory: Optional[Trajectory] = None
    #: control applied in ``simulate``
    applied_control: Optional[ControlSignal] = None
    snapshot_stride: int = 1
    #: residual over [0, T + post_horizon]
    simulated_series: Tuple[Tuple[float, float], ...] = ()
    #: residual at T
    simulated_final: Optional[float] = None
    observability_constant: Optional[float] = None
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def control(self) -> Optional[ControlSignal]:
        if self.min_time is not None:
            return self.min_time.control
        if self.min_norm is not None:
            return self.min_norm.control
        return self.applied_control

    @property
    def exports_control(self) -> bool:
        return self.command in ("simulate", "min-norm", "min-time") and (
            self.exit_code != EXIT_NOT_SYNCHRONIZABLE
        )

    @property
    def residual_series(self) -> Tuple[Tuple[float, float], ...]:
        if self.verification is not None:
            return self.verification.series
        return self.simulated_series

    def result_payload(self) -> Optional[dict]:
        if self.min_time is not None:
            return self.min_time.to_dict()
        if self.min_norm is not None:
            payload = self.min_norm.to_dict()
            payload["observability_constant"] = self.observability_constant
            return payload
        if self.curve is not None:
            return {
                "norm_curve": [
                    {"T": p.T, "N": p.N, "converged": p.converged, "iters": p.iterations}
                    for p in self.curve
                ]
            }
        if self.command == "simulate" and self.trajectory is not None:
            return {
                "T": self.trajectory.timegrid.horizon,
                "controlled": self.applied_control is not None,
                "final_residual": self.simulated_final,
            }
        return None

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "exit_code": self.exit_code,
            "message": self.message,
            "classification": (
                None if self.classification is None else self.classification.to_dict()
            ),
            "result": self.result_payload(),
            "verification": (
                None if self.verification is None else self.verification.to_dict()
            ),
            "timings": self.timings,
        }


@contextmanager
def _timed(report: RunReport, name: str):
    start = time.perf_counter()
    try:
        yield
    finally:
        report.timings[name] = time.perf_counter() - start


def _residual_measure(structure: SyncStructure, grid: SpatialGrid):
    if structure.row_condition:
        def measure(y):
            return grid.norm(structure.D @ y)
        return measure
    return grid.norm


def _residual_series(
    trajectory: Trajectory,
    structure: SyncStructure,
    grid: SpatialGrid,
    scale: Optional[float] = None,
    offset: float = 0.0,
) -> Tuple[Tuple[float, float], ...]:
    measure = _residual_measure(structure, grid)
    scale = scale or measure(trajectory.values[0]) or 1.0
    return tuple(
        (offset + float(t), measure(trajectory.values[j]) / scale)
        for j, t in enumerate(trajectory.timegrid.knots)
    )


def _require_T(config: ProblemConfig) -> float:
    if config.time.T is None:
        raise ValidationError("time.T", "required for this command")
    return config.time.T


def _controlled_trajectory(config: ProblemConfig, control: Optional[ControlSignal]):
    if control is None:
        return None
    pair = config.pair()
    return ParabolicSystem(
        pair.A, pair.B, control.support.grid, control.timegrid, control.support
    ).forward(config.resolve_initial_state(), control)


def _simulate(report: RunReport, config: ProblemConfig, control_path):
    structure = report.classification
    T = _require_T(config)
    timegrid = build_time_grid(T, config.time.nt_ref)
    pair = config.pair()
    control = None
    if control_path is not None:
        control = read_control(control_path, timegrid, report.mask, pair.m)
    report.applied_control = control
    with _timed(report, "simulate"):
        system = ParabolicSystem(pair.A, pair.B, report.grid, timegrid, report.mask)
        y0 = config.resolve_initial_state()
        report.trajectory = system.forward(y0, control)
        scale = _residual_measure(structure, report.grid)(y0)
        series = _residual_series(report.trajectory, structure, report.grid, scale)
        report.simulated_final = series[-1][1]
        post_horizon = config.time.post_horizon
        if post_horizon > 0:
            # uncontrolled continuation on the same step size
            steps = max(1, math.ceil(post_horizon / timegrid.dt - 1e-9))
            post_grid = build_time_grid(post_horizon, steps)
            drift = ParabolicSystem(pair.A, pair.B, report.grid, post_grid).forward(
                report.trajectory.final
            )
            tail = _residual_series(drift, structure, report.grid, scale, offset=T)
            series += tail[1:]
    report.simulated_series = series


def _min_norm(report: RunReport, config: ProblemConfig):
    structure = report.classification
    T = _require_T(config)
    y0 = config.resolve_initial_state()
    problem = ControlProblem(
        structure, report.grid, build_time_grid(T, config.time.nt_ref), report.mask
    )
    with _timed(report, "solve"):
        result = solve_min_norm(problem, y0, config.solver)
    report.min_norm = result
    with _timed(report, "observability"):
        report.observability_constant = estimate_observability_constant(
            problem, seed=config.seed
        )
    with _timed(report, "verify"):
        report.verification = verify_solution(
            result, structure, y0, report.grid, report.mask, config.time.post_horizon
        )
        report.trajectory = _controlled_trajectory(config, result.control)
    if not result.converged:
        report.exit_code = EXIT_SOLVER_FAILURE
        report.message = (
            f"minimal-norm solve did not reach the target residual "
            f"({result.residual:.3e} > {result.target_tol:.3e})"
        )
    else:
        report.message = f"N({T:g}) = {result.norm_value:.10g}"


def _norm_curve(report: RunReport, config: ProblemConfig):
    T_values = config.time.T_values
    if T_values is None:
        raise ValidationError("time.T_values", "required for this command")
    with _timed(report, "solve"):
        report.curve = norm_curve(
            report.classification,
            T_values,
            config.resolve_initial_state(),
            report.grid,
            report.mask,
            config.solver,
            config.time.nt_ref,
        )
    failed = [p.T for p in report.curve if not p.converged]
    if failed:
        report.exit_code = EXIT_SOLVER_FAILURE
        report.message = f"no convergence at T = {', '.join(f'{T:g}' for T in failed)}"
    else:
        report.message = f"{len(report.curve)} horizons solved"


def _min_time(report: RunReport, config: ProblemConfig):
    M = config.mintime.M
    if M is None:
        raise ValidationError("mintime.M", "required for this command")
    structure = report.classification
    y0 = config.resolve_initial_state()
    with _timed(report, "solve"):
        result = solve_min_time(
            M, structure, y0, report.grid, report.mask, config.mintime.options, config.solver
        )
    report.min_time = result
    report.message = str(result.status)
    if result.status is MinTimeStatus.SOLVED:
        report.message = f"T* = {result.T_star:.10g}"
        with _timed(report, "verify"):
            report.verification = verify_solution(
                result,
                structure,
                y0,
                report.grid,
                report.mask,
                config.time.post_horizon,
                norm_tol=config.mintime.options.bisect_tol,
            )
            report.trajectory = _controlled_trajectory(config, result.control)
        if result.min_norm is not None and not result.min_norm.converged:
            report.exit_code = EXIT_SOLVER_FAILURE
            report.message += "; minimal-norm solve at T* did not converge"
    if result.inconclusive:
        report.message += " (inconclusive: M is close to the limit norm estimate)"


def run_command(
    command: str, config: ProblemConfig, control_path=None
) -> RunReport:
    """Run ``command`` on ``config`` and return the report.

    Configuration problems specific to the command raise
    :class:`~syncctl.exceptions.ValidationError`; everything else,
    including solver failures, is recorded in the report's exit code.
    """
    if command not in COMMANDS:
        raise ValidationError("command", f"expected one of {', '.join(COMMANDS)}")
    if control_path is not None and command != "simulate":
        raise ValidationError("control", "a control file is only accepted by simulate")

    grid = config.grid()
    report = RunReport(
        command=command,
        config_hash=config.digest(),
        grid=grid,
        mask=config.mask(),
        snapshot_stride=config.time.snapshot_stride,
    )
    with _timed(report, "classify"):
        report.classification = classify(config.pair())
    structure = report.classification
    logger.info("classification: %s", structure.hypothesis)

    if command == "classify":
        report.message = (
            f"{structure.hypothesis}, rank {structure.rank_value} of {structure.rank_target}"
        )
        if not structure.synchronizable:
            report.exit_code = EXIT_NOT_SYNCHRONIZABLE
        return report
    if command == "simulate":
        _simulate(report, config, control_path)
        return report
    if structure.hypothesis is Hypothesis.NEITHER:
        report.exit_code = EXIT_NOT_SYNCHRONIZABLE
        report.message = "pair satisfies neither H1 nor H2; not synchronizable"
        if command == "min-time":
            report.min_time = MinTimeResult(
                MinTimeStatus.NOT_SYNCHRONIZABLE, config.mintime.M or 0.0
            )
        return report

    try:
        if command == "min-norm":
            _min_norm(report, config)
        elif command == "norm-curve":
            _norm_curve(report, config)
        else:
            _min_time(report, config)
    except (NotConverged, BracketFailure, LinearSolveFailure) as err:
        logger.error("%s failed: %s", command, err)
        report.exit_code = EXIT_SOLVER_FAILURE
        report.message = str(err)
        if isinstance(err, NotConverged) and isinstance(err.result, MinNormResult):
            report.min_norm = err.result
    return report

