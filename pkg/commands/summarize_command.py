"""`summarize` command: one row of run-level aggregates per metrics CSV, optionally mean / std across seeds"""

import argparse
import os

from decorators.cli_decorators import EXIT_OK, exit_on_error
from pipeline.post_processing import SUMMARY_KEYS, aggregate_summaries, read_metrics_csv, summarize_metrics

NAME = "summarize"

METRICS_FILE = "metrics.csv"


def register(subparsers):
    parser = subparsers.add_parser(NAME, help="Summarize metrics CSVs (final accuracy, mean diagnostics)")
    parser.add_argument("--in", dest="inputs", nargs="+", required=True, help="Metrics CSV files or run directories")
    parser.add_argument(
        "--across-seeds",
        action="store_true",
        help="Treat the inputs as trials of one config and append mean and std rows",
    )
    parser.set_defaults(handler=handle)


def _cell(value) -> str:
    return "" if value is None else format(value, ".4f")


def _metrics_path(path: str) -> str:
    return os.path.join(path, METRICS_FILE) if os.path.isdir(path) else path


def _label(path: str) -> str:
    if os.path.isdir(path):
        return os.path.basename(os.path.normpath(path))
    return os.path.splitext(os.path.basename(path))[0]


@exit_on_error
def handle(args: argparse.Namespace) -> int:
    print("\t".join(["run"] + SUMMARY_KEYS))
    summaries = []
    for path in args.inputs:
        summary = summarize_metrics(read_metrics_csv(_metrics_path(path)))
        summaries.append(summary)
        print("\t".join([_label(path)] + [_cell(summary[key]) for key in SUMMARY_KEYS]))

    if args.across_seeds:
        stats = aggregate_summaries(summaries)
        print("\t".join(["mean"] + [_cell(stats[key][0]) for key in SUMMARY_KEYS]))
        print("\t".join(["std"] + [_cell(stats[key][1]) for key in SUMMARY_KEYS]))
    return EXIT_OK
