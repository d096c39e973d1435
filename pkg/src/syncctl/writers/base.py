"""
:class:`syncctl.writers.BaseResultWriter` provides a base class for
writing the result of a command run to an output directory.

To add a new output format:

- Create a new file under ``syncctl/writers/``
- Extend ``BaseResultWriter``, give it a unique ``name``, list the file
  names it may produce in ``files`` and implement ``outputs``
- Add unit tests for the new writer in ``tests/test_writers/``

The new subclass is loaded automatically and included in the writers
returned by :meth:`BaseResultWriter.available_writers`, so it can be named
in the ``outputs.formats`` list of a configuration. Opening files and
reporting I/O failures is handled here; a writer only emits content.

-------------------
"""

import importlib
import logging
import pkgutil
from functools import cache
from pathlib import Path
from typing import Callable, Dict, Iterator, List, TextIO, Tuple, Type

from syncctl.exceptions import IoError

logger = logging.getLogger(__name__)

#: callable that writes one file's content to an open text stream
Emitter = Callable[[TextIO], None]


class BaseResultWriter:
    """Base class for serializing a :class:`~syncctl.commands.RunReport`."""

    #: Writer name, used in ``outputs.formats``. Subclasses must define a unique name.
    name: str = "Base Writer"

    #: every file name this writer may produce; which ones depend on the command
    files: Tuple[str, ...] = ()

    def outputs(self, report) -> Iterator[Tuple[str, Emitter]]:
        """
        Yield ``(file name, emitter)`` for each file that applies to ``report``.
        Must be implemented by subclasses.
        """
        # report is a RunReport; no type hint because of circular import
        raise NotImplementedError

    def write(self, report, directory: Path) -> List[Path]:
        """Write every applicable file into ``directory``; returns their paths."""
        directory = Path(directory)
        written: List[Path] = []
        for filename, emit in self.outputs(report):
            if filename not in self.files:
                raise ValueError(f"{self.name} writer does not declare {filename!r}")
            path = directory / filename
            try:
                with open(path, "w", newline="", encoding="utf-8") as stream:
                    emit(stream)
            except OSError as err:
                raise IoError(f"cannot write {filename} ({err.strerror or err})", path)
            written.append(path)
        logger.debug("%s writer: %s", self.name, [path.name for path in written])
        return written

    # cache import class method to ensure we only import once
    @classmethod
    @cache
    def import_writers(cls) -> int:
        """Import all syncctl writers so that they will be included in
        available writers even if not explicitly imported. Only import once.
        returns the count of modules imported."""

        logger.debug("Loading writers under syncctl.writers")
        import syncctl.writers

        writer_path = syncctl.writers.__path__
        writer_prefix = f"{syncctl.writers.__name__}."

        import_count = 0
        for _, modname, _ in pkgutil.iter_modules(writer_path, writer_prefix):
            if not modname.endswith(".base"):
                importlib.import_module(modname)
                import_count += 1

        return import_count

    @classmethod
    def available_writers(cls) -> Dict[str, Type["BaseResultWriter"]]:
        """
        Dictionary of available writers keyed on name.
        """
        cls.import_writers()
        return {c.name: c for c in cls.__subclasses__()}  # type: ignore

    @classmethod
    def file_owners(cls) -> Dict[str, str]:
        """Output file name → name of the writer that produces it."""
        owners: Dict[str, str] = {}
        for name, writer in cls.available_writers().items():
            for filename in writer.files:
                if filename in owners:
                    raise ValueError(
                        f"{filename!r} is claimed by writers {owners[filename]!r} and {name!r}"
                    )
                owners[filename] = name
        return owners
