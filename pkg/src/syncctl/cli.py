"""
Command-line interface::

    syncctl <command> --config PATH [--out DIR] [--control PATH] [-v]

with ``command`` one of classify, simulate, min-norm, norm-curve, min-time.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from syncctl import __version__
from syncctl.commands import COMMANDS, EXIT_SOLVER_FAILURE, EXIT_USAGE, run_command
from syncctl.config import load_config
from syncctl.exceptions import SyncctlError
from syncctl.writers import write_outputs

logger = logging.getLogger(__name__)

LOG_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="syncctl",
        description=(
            "Minimal-norm and minimal-time synchronizing controls for coupled heat systems."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=COMMANDS, help="what to compute")
    parser.add_argument(
        "--config", required=True, type=Path, help="problem configuration file"
    )
    parser.add_argument(
        "--out",
        type=Path,
        default=None,
        help="output directory (default: outputs.dir of the config, relative to it)",
    )
    parser.add_argument(
        "--control",
        type=Path,
        default=None,
        help="control table in control.csv layout (simulate only)",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="more logging; repeat for debug output",
    )
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        # argparse exits with 2 on usage errors, which is reserved here
        return EXIT_USAGE if err.code else 0

    logging.basicConfig(
        level=LOG_LEVELS[min(args.verbose, len(LOG_LEVELS) - 1)],
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        config = load_config(args.config)
        report = run_command(args.command, config, args.control)
        out = args.out if args.out is not None else config.base_dir / config.outputs.dir
        write_outputs(report, out, config.outputs.formats)
    except SyncctlError as err:
        print(f"syncctl: {err}", file=sys.stderr)
        # numerical failures are RuntimeErrors, bad input is a ValueError or OSError
        return EXIT_SOLVER_FAILURE if isinstance(err, RuntimeError) else EXIT_USAGE

    stream = sys.stdout if report.exit_code == 0 else sys.stderr
    print(f"{args.command}: {report.message}", file=stream)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
