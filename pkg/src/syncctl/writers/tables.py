"""
Plot-ready CSV tables of a run. Every file is written only from solver
output, with floats at 17 significant digits, so identical runs produce
byte-identical files.

    norm_curve.csv      T,N,converged,iters
    control.csv         t,component,x,value   (nodes in ω only)
    trajectory.csv      t,component,x,value   (every snapshot_stride-th knot)
    sync_residual.csv   t,residual

In ``control.csv`` the row with time ``t`` holds the control on the step
ending at ``t``; components are numbered from 0.
"""

import csv
import logging
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, TextIO, Tuple

import numpy as np

from syncctl.config.codec import format_float
from syncctl.exceptions import IoError, ValidationError
from syncctl.fields import ControlSignal
from syncctl.grid import OmegaMask, TimeGrid
from syncctl.writers.base import BaseResultWriter, Emitter

logger = logging.getLogger(__name__)

NORM_CURVE_HEADER = ("T", "N", "converged", "iters")
FIELD_HEADER = ("t", "component", "x", "value")
RESIDUAL_HEADER = ("t", "residual")


def _table(header: Sequence[str], rows: Iterable[Sequence]) -> Emitter:
    def emit(stream: TextIO):
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)

    return emit


def control_rows(control: Optional[ControlSignal]):
    if control is None:
        return
    nodes = control.support.grid.nodes
    inside = np.flatnonzero(control.support.mask)
    for j, t in enumerate(control.timegrid.knots[1:]):
        for c in range(control.m):
            for i in inside:
                yield (
                    format_float(t),
                    c,
                    format_float(nodes[i]),
                    format_float(control.values[j, c, i]),
                )


class CsvTableWriter(BaseResultWriter):
    """Writes the tables that apply to the run's command."""

    #: writer name: csv
    name: str = "csv"

    files: Tuple[str, ...] = (
        "norm_curve.csv",
        "control.csv",
        "trajectory.csv",
        "sync_residual.csv",
    )

    def outputs(self, report) -> Iterator[Tuple[str, Emitter]]:
        if report.curve is not None:
            rows = (
                (format_float(p.T), format_float(p.N), str(p.converged).lower(), p.iterations)
                for p in report.curve
            )
            yield "norm_curve.csv", _table(NORM_CURVE_HEADER, rows)
        if report.exports_control:
            yield "control.csv", _table(FIELD_HEADER, control_rows(report.control))
        if report.trajectory is not None:
            yield "trajectory.csv", _table(FIELD_HEADER, self._trajectory_rows(report))
        if report.residual_series:
            rows = ((format_float(t), format_float(r)) for t, r in report.residual_series)
            yield "sync_residual.csv", _table(RESIDUAL_HEADER, rows)

    @staticmethod
    def _trajectory_rows(report):
        trajectory = report.trajectory
        nodes = report.grid.nodes
        knots = trajectory.timegrid.knots
        last = len(knots) - 1
        for j, t in enumerate(knots):
            if j % report.snapshot_stride and j != last:
                continue
            snapshot = trajectory.values[j]
            for c in range(trajectory.k):
                for i, x in enumerate(nodes):
                    yield format_float(t), c, format_float(x), format_float(snapshot[c, i])


def read_control(
    path, timegrid: TimeGrid, support: OmegaMask, m: int
) -> ControlSignal:
    """Load a control in the ``control.csv`` layout onto ``timegrid``.

    Entries not listed are zero; every listed time must be a knot
    ``t_1 .. t_nt`` and every position an interior node.
    """
    path = Path(path)
    grid = support.grid
    values = np.zeros((timegrid.nt, m, grid.nx))
    try:
        with open(path, newline="", encoding="utf-8") as csvfile:
            reader = csv.DictReader(csvfile)
            if tuple(reader.fieldnames or ()) != FIELD_HEADER:
                raise ValidationError("control", f"expected header {','.join(FIELD_HEADER)}")
            for line, row in enumerate(reader, start=2):
                try:
                    t, c = float(row["t"]), int(row["component"])
                    x, value = float(row["x"]), float(row["value"])
                except (TypeError, ValueError):
                    raise ValidationError("control", f"line {line}: malformed row")
                j = int(round(t / timegrid.dt)) - 1
                i = int(round(x / grid.dx)) - 1
                off_knot = abs((j + 1) * timegrid.dt - t) > 1e-9 * timegrid.horizon
                if not 0 <= j < timegrid.nt or off_knot:
                    raise ValidationError("control", f"line {line}: t={t} is not a time step end")
                off_node = abs((i + 1) * grid.dx - x) > 1e-9 * grid.length
                if not 0 <= i < grid.nx or off_node:
                    raise ValidationError("control", f"line {line}: x={x} is not a grid node")
                if not 0 <= c < m:
                    raise ValidationError("control", f"line {line}: component {c} out of range")
                values[j, c, i] = value
    except OSError as err:
        raise IoError(f"cannot read control ({err.strerror or err})", path)
    control = ControlSignal(timegrid, support, values)
    if np.any(values * (1 - support.mask)):
        logger.warning("control entries outside the control region were dropped")
    return control
