import csv
import logging

import numpy as np
import pytest
from syncctl.commands import RunReport, run_command
from syncctl.config import loads, to_string
from syncctl.exceptions import IoError, ValidationError
from syncctl.fields import ControlSignal
from syncctl.grid import build_grid, build_time_grid, omega_mask
from syncctl.writers import write_outputs
from syncctl.writers.tables import FIELD_HEADER, CsvTableWriter, read_control

from conftest import h1_config


def read_rows(path):
    with open(path, newline="") as csvfile:
        return list(csv.reader(csvfile))


@pytest.fixture(scope="module")
def min_norm_report():
    return run_command("min-norm", loads(to_string(h1_config())))


def test_empty_curve(tmp_path):
    grid = build_grid(1.0, 10)
    report = RunReport("norm-curve", "0" * 64, grid, omega_mask(grid, [(0.3, 0.8)]), curve=[])
    written = CsvTableWriter().write(report, tmp_path)
    assert [path.name for path in written] == ["norm_curve.csv"]
    assert (tmp_path / "norm_curve.csv").read_text() == "T,N,converged,iters\n"


def test_norm_curve(tmp_path):
    report = run_command("norm-curve", loads(to_string(h1_config())))
    CsvTableWriter().write(report, tmp_path)
    rows = read_rows(tmp_path / "norm_curve.csv")
    assert rows[0] == ["T", "N", "converged", "iters"]
    assert [float(row[0]) for row in rows[1:]] == [0.25, 0.5, 1.0]
    assert all(row[2] in ("true", "false") for row in rows[1:])
    norms = [float(row[1]) for row in rows[1:]]
    assert norms == sorted(norms, reverse=True)
    assert not (tmp_path / "control.csv").exists()


def test_control(tmp_path, min_norm_report):
    report = min_norm_report
    CsvTableWriter().write(report, tmp_path)
    rows = read_rows(tmp_path / "control.csv")
    assert tuple(rows[0]) == FIELD_HEADER
    control = report.control
    assert len(rows) - 1 == control.timegrid.nt * control.m * control.support.count
    # first row: end of the first step, component 0, first node in ω
    first_node = report.grid.nodes[np.flatnonzero(report.mask.mask)[0]]
    assert float(rows[1][0]) == pytest.approx(control.timegrid.dt)
    assert rows[1][1] == "0"
    assert float(rows[1][2]) == first_node


def test_zero_control_for_synchronized_state(tmp_path):
    data = h1_config(initial_state=[{"mode": "sin"}, {"mode": "sin"}])
    report = run_command("min-norm", loads(to_string(data)))
    assert report.exit_code == 0
    CsvTableWriter().write(report, tmp_path)
    rows = read_rows(tmp_path / "control.csv")
    assert len(rows) > 1
    assert {row[3] for row in rows[1:]} == {"0.0"}


def test_trajectory_stride(tmp_path):
    data = h1_config()
    data["time"] = {"T": 0.5, "nt_ref": 40, "snapshot_stride": 3}
    report = run_command("simulate", loads(to_string(data)))
    CsvTableWriter().write(report, tmp_path)
    rows = read_rows(tmp_path / "trajectory.csv")
    times = sorted({float(row[0]) for row in rows[1:]})
    # every third knot plus the final one
    assert len(times) == 15
    assert times[-1] == pytest.approx(0.5)
    assert len(rows) - 1 == 15 * 2 * report.grid.nx
    residuals = read_rows(tmp_path / "sync_residual.csv")
    assert residuals[0] == ["t", "residual"]
    # 40 controlled steps and 40 more over the default post-horizon of 0.5
    assert len(residuals) - 1 == 81
    assert float(residuals[1][1]) == 1.0
    assert float(residuals[-1][0]) == pytest.approx(1.0)


def test_identical_runs_identical_files(tmp_path):
    config = loads(to_string(h1_config()))
    for name in ("first", "second"):
        write_outputs(run_command("min-norm", config), tmp_path / name, ["csv"])
    for table in ("control.csv", "trajectory.csv", "sync_residual.csv"):
        first = (tmp_path / "first" / table).read_bytes()
        assert first == (tmp_path / "second" / table).read_bytes()


class TestReadControl:
    def test_round_trip(self, tmp_path, min_norm_report):
        CsvTableWriter().write(min_norm_report, tmp_path)
        control = min_norm_report.control
        loaded = read_control(tmp_path / "control.csv", control.timegrid, control.support, 1)
        assert np.array_equal(loaded.values, control.values)

    def test_missing_entries_are_zero(self, tmp_path):
        grid = build_grid(1.0, 9)
        mask = omega_mask(grid, [(0.25, 0.55)])
        path = tmp_path / "control.csv"
        path.write_text("t,component,x,value\n0.5,0,0.3,2.5\n")
        control = read_control(path, build_time_grid(1.0, 2), mask, 1)
        expected = np.zeros((2, 1, 9))
        expected[0, 0, 2] = 2.5
        assert np.array_equal(control.values, expected)

    def test_outside_region_dropped(self, tmp_path, caplog):
        grid = build_grid(1.0, 9)
        mask = omega_mask(grid, [(0.25, 0.55)])
        path = tmp_path / "control.csv"
        path.write_text("t,component,x,value\n0.5,0,0.9,1.0\n")
        with caplog.at_level(logging.WARNING):
            control = read_control(path, build_time_grid(1.0, 2), mask, 1)
        assert isinstance(control, ControlSignal)
        assert not control.values.any()
        assert "dropped" in caplog.text

    @pytest.mark.parametrize(
        "text,message",
        [
            ("time,component,x,value\n", "expected header"),
            ("t,component,x,value\n0.25,0,0.3,1.0\n", "line 2: t=0.25"),
            ("t,component,x,value\n1.5,0,0.3,1.0\n", "not a time step end"),
            ("t,component,x,value\n0.5,0,0.33,1.0\n", "x=0.33 is not a grid node"),
            ("t,component,x,value\n0.5,1,0.3,1.0\n", "component 1 out of range"),
            ("t,component,x,value\n0.5,zero,0.3,1.0\n", "malformed row"),
        ],
    )
    def test_invalid(self, tmp_path, text, message):
        grid = build_grid(1.0, 9)
        path = tmp_path / "control.csv"
        path.write_text(text)
        with pytest.raises(ValidationError, match=message):
            read_control(path, build_time_grid(1.0, 2), omega_mask(grid, [(0.25, 0.55)]), 1)

    def test_missing_file(self, tmp_path):
        grid = build_grid(1.0, 9)
        with pytest.raises(IoError):
            read_control(
                tmp_path / "nope.csv",
                build_time_grid(1.0, 2),
                omega_mask(grid, [(0.25, 0.55)]),
                1,
            )
