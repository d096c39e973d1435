from typing import Iterator, Tuple

from syncctl.config.codec import to_string
from syncctl.writers.base import BaseResultWriter, Emitter

REPORT_FILE = "report.json"


class JsonReportWriter(BaseResultWriter):
    """Writes the full run report to ``report.json``."""

    #: writer name: json
    name: str = "json"

    files: Tuple[str, ...] = (REPORT_FILE,)

    def outputs(self, report) -> Iterator[Tuple[str, Emitter]]:
        text = to_string(report.to_dict())
        yield REPORT_FILE, lambda stream: stream.write(text)
