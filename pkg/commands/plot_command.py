"""`plot` command: static SVG chart of one metric across runs"""

import argparse

from decorators.cli_decorators import EXIT_OK, exit_on_error
from services.plot_service import plot_metrics

NAME = "plot"


def register(subparsers):
    parser = subparsers.add_parser(NAME, help="Plot a metric from one or more metrics CSVs")
    parser.add_argument("--in", dest="inputs", nargs="+", required=True, help="Metrics CSV files")
    parser.add_argument("--metric", default="test_acc")
    parser.add_argument("--out", required=True, help="Output SVG file")
    parser.set_defaults(handler=handle)


@exit_on_error
def handle(args: argparse.Namespace) -> int:
    plot_metrics(args.inputs, args.metric, args.out)
    return EXIT_OK
