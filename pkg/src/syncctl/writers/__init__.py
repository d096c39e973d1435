import logging
from pathlib import Path
from typing import Iterable, List

from syncctl.exceptions import IoError, ValidationError
from syncctl.writers.base import BaseResultWriter

logger = logging.getLogger(__name__)


def write_outputs(report, directory, formats: Iterable[str] = ("json", "csv")) -> List[Path]:
    """Write ``report`` in every requested format; returns the files written."""
    directory = Path(directory)
    writers = BaseResultWriter.available_writers()
    unknown = [name for name in formats if name not in writers]
    if unknown:
        raise ValidationError(
            "outputs.formats",
            f"unknown format {unknown[0]!r}; available: {', '.join(sorted(writers))}",
        )
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise IoError(f"cannot create output directory ({err.strerror or err})", directory)
    owners = BaseResultWriter.file_owners()
    written: List[Path] = []
    for name in formats:
        written.extend(writers[name]().write(report, directory))
    for path in written:
        logger.debug("%s (%s)", path, owners[path.name])
    logger.info("wrote %d files to %s", len(written), directory)
    return written


__all__ = ["BaseResultWriter", "write_outputs"]
