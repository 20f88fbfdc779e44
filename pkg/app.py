"""
Federated Learning Byzantine Simulator - command-line entry point

Sub-commands are registered from the commands package:
- run: train one experiment, write metrics CSV + manifest
- make-mask: generate an SBMK attack mask
- plot: render metrics as a static SVG chart
- summarize: run-level aggregates of metrics CSVs
"""

import argparse
import sys
from typing import List, Optional

from loguru import logger

from commands import COMMANDS
from config import Config


def configure_logging(level: str = Config.LOG_LEVEL):
    """Replace loguru's default sink with a stderr sink at the given level"""
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format="{time:HH:mm:ss} | {level: <7} | {message}")


def create_parser() -> argparse.ArgumentParser:
    """
    Parser factory with every sub-command registered

    Returns:
        Configured ArgumentParser
    """
    parser = argparse.ArgumentParser(prog="flsim", description="Byzantine-robust federated learning simulator")
    parser.add_argument("--log-level", default=Config.LOG_LEVEL, help="DEBUG, INFO, WARNING or ERROR")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = create_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
