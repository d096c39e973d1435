import logging

import pytest
from syncctl.exceptions import IoError
from syncctl.writers.base import BaseResultWriter
from syncctl.writers.report import JsonReportWriter


class TestBaseResultWriter:
    def test_available_writers(self):
        available_writers = BaseResultWriter.available_writers()
        assert isinstance(available_writers, dict)

        # NOTE: import _after_ generating available writers
        # so we can confirm it gets loaded
        from syncctl.writers.tables import CsvTableWriter

        assert CsvTableWriter.name in available_writers
        assert available_writers[CsvTableWriter.name] == CsvTableWriter
        assert "json" in available_writers

    def test_writers_are_unique(self):
        assert len(BaseResultWriter.available_writers()) == len(
            BaseResultWriter.__subclasses__()
        ), "Writer names have to be unique."

    def test_write_not_implemented(self, tmp_path):
        with pytest.raises(NotImplementedError):
            BaseResultWriter().write(None, tmp_path)

    def test_file_owners(self):
        owners = BaseResultWriter.file_owners()
        assert owners["report.json"] == "json"
        for table in ("norm_curve.csv", "control.csv", "trajectory.csv", "sync_residual.csv"):
            assert owners[table] == "csv"

    def test_undeclared_file(self, tmp_path):
        writer = JsonReportWriter()
        writer.outputs = lambda report: iter([("notes.txt", lambda stream: stream.write(""))])
        with pytest.raises(ValueError, match="does not declare 'notes.txt'"):
            writer.write(None, tmp_path)
        assert not (tmp_path / "notes.txt").exists()

    def test_unwritable_directory(self, tmp_path):
        writer = JsonReportWriter()
        writer.outputs = lambda report: iter([("report.json", lambda stream: stream.write("{}"))])
        with pytest.raises(IoError) as excinfo:
            writer.write(None, tmp_path / "missing")
        assert excinfo.value.path == tmp_path / "missing" / "report.json"


def test_import_writers_import_only_once(caplog):
    # clear the cache, since any command run anywhere in the
    # test suite will populate it
    BaseResultWriter.import_writers.cache_clear()

    with caplog.at_level(logging.DEBUG):
        import_count = BaseResultWriter.import_writers()
    # report and tables
    assert import_count >= 2
    assert "Loading writers" in caplog.text

    caplog.clear()
    with caplog.at_level(logging.DEBUG):
        BaseResultWriter.import_writers()
    assert "Loading writers" not in caplog.text


@pytest.mark.last
def test_writers_unique_error():
    # run this test last because we can't undefine the subclass
    # once it exists...
    class CsvTableWriter2(BaseResultWriter):
        name = "csv"  # duplicates existing writer

    assert len(BaseResultWriter.available_writers()) != len(
        BaseResultWriter.__subclasses__()
    )
