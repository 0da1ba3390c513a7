import argparse
import logging
import sys
from typing import List, Optional

from coordfb import __version__
from coordfb.commands import COMMANDS
from coordfb.config import LOG_FILE, LOG_LEVEL, validate_config

logger = logging.getLogger(__name__)


def configure_logging(level: str = LOG_LEVEL, log_file: str = LOG_FILE):
    """Logs go to stderr so stdout only carries the JSON report"""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default=LOG_LEVEL, choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"])
    common.add_argument("--timing", action="store_true", help="include wall time in the report")
    common.add_argument("--history", action="store_true", help="append the report to the run history")

    parser = argparse.ArgumentParser(prog="coordfb", description="Empirical coordination with channel feedback")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        sub = subparsers.add_parser(command.name, help=command.help, parents=[common])
        command.add_arguments(sub)
        sub.set_defaults(handler=command)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point for the coordfb command line"""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    if not validate_config():
        logger.error("Invalid configuration, see messages above")
        return 3

    command = args.handler()
    return command.run(args)


if __name__ == "__main__":
    sys.exit(main())
