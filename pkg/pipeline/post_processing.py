"""Post-processing: metrics CSV emission and run summaries.

The metrics CSV has one row per aggregation round plus, for diverged runs,
one chance-level row per remaining epoch:

    round,epoch,train_loss,test_acc,escape_cm,escape_tm,byz_selected_frac,drift_norm,angle_deg,temporal_cos

Absent metrics are written as empty fields. Rows are appended and flushed one
at a time so an interrupted run still leaves a valid prefix.
"""

import csv
import os
from typing import Dict, List, Optional, Tuple

import numpy as np

from models.experiment import METRIC_COLUMNS, RoundMetrics
from utils.errors import ConfigError
from utils.file_utils import ensure_parent

FLOAT_FORMAT = ".10g"

SUMMARY_KEYS = [
    "final_acc", "mean_drift_norm", "mean_angle_deg", "mean_temporal_cos",
    "mean_escape_cm", "mean_escape_tm", "mean_byz_selected_frac",
]


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), FLOAT_FORMAT)


class MetricsCsvWriter:
    """Append-only metrics CSV writer (header on open, flush per row)"""

    def __init__(self, path: str):
        ensure_parent(path)
        self.path = path
        self._file = open(path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._file)
        self._writer.writerow(METRIC_COLUMNS)
        self._file.flush()

    def write(self, row: RoundMetrics):
        values = row.as_dict()
        self._writer.writerow([_format(values[col]) for col in METRIC_COLUMNS])
        self._file.flush()

    def close(self):
        if not self._file.closed:
            self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _parse(value: str) -> Optional[float]:
    return None if value == "" else float(value)


def read_metrics_csv(path: str) -> List[Dict[str, Optional[float]]]:
    """
    Read a metrics CSV written by MetricsCsvWriter

    Args:
        path: CSV file path

    Returns:
        One dict per row; empty fields become None

    Raises:
        ConfigError: missing file or a header that does not match the schema
    """
    if not os.path.isfile(path):
        raise ConfigError(f"Metrics file not found: {path}")
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != METRIC_COLUMNS:
            raise ConfigError(f"{path} does not have the metrics CSV header")
        return [{col: _parse(row[col]) for col in METRIC_COLUMNS} for row in reader]


def _mean(rows, key) -> Optional[float]:
    values = [r[key] for r in rows if r[key] is not None]
    return float(np.mean(values)) if values else None


def summarize_metrics(rows: List[Dict[str, Optional[float]]]) -> Dict[str, Optional[float]]:
    """Run-level aggregates: final accuracy and the mean of every per-round diagnostic"""
    accuracies = [r["test_acc"] for r in rows if r["test_acc"] is not None]
    return {
        "final_acc": accuracies[-1] if accuracies else None,
        "mean_drift_norm": _mean(rows, "drift_norm"),
        "mean_angle_deg": _mean(rows, "angle_deg"),
        "mean_temporal_cos": _mean(rows, "temporal_cos"),
        "mean_escape_cm": _mean(rows, "escape_cm"),
        "mean_escape_tm": _mean(rows, "escape_tm"),
        "mean_byz_selected_frac": _mean(rows, "byz_selected_frac"),
    }


def summarize_rounds(metrics: List[RoundMetrics]) -> Dict[str, Optional[float]]:
    return summarize_metrics([m.as_dict() for m in metrics])


def aggregate_summaries(summaries: List[Dict[str, Optional[float]]]) -> Dict[str, Tuple[Optional[float], Optional[float]]]:
    """
    Mean and standard deviation of run summaries across independent trials (seeds)

    The deviation is the sample one (ddof=1) and is 0.0 for a single trial.
    Runs where a key is None are left out for that key.

    Raises:
        ConfigError: no summaries given
    """
    if not summaries:
        raise ConfigError("No runs to aggregate")
    result = {}
    for key in SUMMARY_KEYS:
        values = np.array([s[key] for s in summaries if s[key] is not None], dtype=np.float64)
        if values.size == 0:
            result[key] = (None, None)
            continue
        std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
        result[key] = (float(np.mean(values)), std)
    return result
