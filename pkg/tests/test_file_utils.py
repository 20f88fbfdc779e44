"""Tests for SBMK mask files, sidecars, JSON manifests and the metrics CSV"""

import shutil
import struct
import tempfile
from pathlib import Path

import numpy as np
import pytest

from models.experiment import METRIC_COLUMNS, RoundMetrics
from models.layout import LayerLayout
from models.mask import SparseMask
from pipeline.post_processing import (
    SUMMARY_KEYS,
    MetricsCsvWriter,
    aggregate_summaries,
    read_metrics_csv,
    summarize_metrics,
    summarize_rounds,
)
from utils.errors import BadMagicError, ConfigError, DimensionError, TruncatedFileError
from utils.file_utils import (
    read_json,
    read_mask_file,
    sidecar_path,
    write_json,
    write_mask_file,
    write_mask_sidecar,
)


@pytest.fixture
def temp_dir():
    """Create a temporary directory for output files"""
    temp_dir = tempfile.mkdtemp()
    yield Path(temp_dir)
    shutil.rmtree(temp_dir)


@pytest.fixture
def layout():
    return LayerLayout.from_shapes([("w", "fully-connected", (2, 3)), ("b", "bias", (2,))])


class TestMaskFile:
    """Test cases for the SBMK binary format"""

    def test_exact_bytes(self, temp_dir, layout):
        path = temp_dir / "m.sbmk"
        write_mask_file(str(path), SparseMask.from_indices([4, 1], layout))
        expected = b"SBMK" + struct.pack("<IQQ", 1, 8, 2) + struct.pack("<QQ", 1, 4)
        assert path.read_bytes() == expected

    def test_read_back(self, temp_dir, layout):
        path = temp_dir / "nested" / "m.sbmk"
        mask = SparseMask.from_indices([0, 2, 5], layout)
        write_mask_file(str(path), mask)
        np.testing.assert_array_equal(read_mask_file(str(path), layout).bits, mask.bits)

    def test_empty_mask(self, temp_dir, layout):
        path = temp_dir / "empty.sbmk"
        write_mask_file(str(path), SparseMask.empty(layout))
        assert path.stat().st_size == 24
        assert read_mask_file(str(path), layout).ones == 0

    def test_bad_magic(self, temp_dir, layout):
        path = temp_dir / "bad.sbmk"
        path.write_bytes(b"MASK" + struct.pack("<IQQ", 1, 8, 0))
        with pytest.raises(BadMagicError):
            read_mask_file(str(path), layout)

    def test_unsupported_version(self, temp_dir, layout):
        path = temp_dir / "v2.sbmk"
        path.write_bytes(b"SBMK" + struct.pack("<IQQ", 2, 8, 0))
        with pytest.raises(BadMagicError):
            read_mask_file(str(path), layout)

    def test_dimension_mismatch(self, temp_dir, layout):
        path = temp_dir / "d.sbmk"
        path.write_bytes(b"SBMK" + struct.pack("<IQQ", 1, 9, 0))
        with pytest.raises(DimensionError):
            read_mask_file(str(path), layout)

    def test_truncated_indices(self, temp_dir, layout):
        path = temp_dir / "t.sbmk"
        path.write_bytes(b"SBMK" + struct.pack("<IQQ", 1, 8, 2) + struct.pack("<Q", 1))
        with pytest.raises(TruncatedFileError):
            read_mask_file(str(path), layout)

    def test_unsorted_indices(self, temp_dir, layout):
        path = temp_dir / "u.sbmk"
        path.write_bytes(b"SBMK" + struct.pack("<IQQ", 1, 8, 2) + struct.pack("<QQ", 4, 1))
        with pytest.raises(DimensionError):
            read_mask_file(str(path), layout)

    def test_sidecar(self, temp_dir, layout):
        path = str(temp_dir / "m.sbmk")
        mask = SparseMask.from_indices([0, 1], layout)
        target = write_mask_sidecar(path, mask, "occupancy table")
        assert target == sidecar_path(path) == path + ".txt"
        text = Path(target).read_text()
        assert "ones=2" in text and "occupancy table" in text


class TestJson:
    """Test cases for manifest JSON helpers"""

    def test_sorted_round_trip(self, temp_dir):
        path = temp_dir / "out" / "manifest.json"
        write_json(str(path), {"b": 1, "a": [1.5, None]})
        assert path.read_text().index('"a"') < path.read_text().index('"b"')
        assert read_json(str(path)) == {"a": [1.5, None], "b": 1}


class TestMetricsCsv:
    """Test cases for the metrics CSV writer and reader"""

    def test_header_and_empty_fields(self, temp_dir):
        path = temp_dir / "metrics.csv"
        with MetricsCsvWriter(str(path)) as writer:
            writer.write(RoundMetrics(round=1, epoch=1, train_loss=0.5))
            writer.write(RoundMetrics(round=2, epoch=1, train_loss=0.25, test_acc=0.75))
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(METRIC_COLUMNS)
        assert lines[1] == "1,1,0.5,,,,,,,"
        assert lines[2].startswith("2,1,0.25,0.75")

    def test_read_back_and_summary(self, temp_dir):
        path = temp_dir / "metrics.csv"
        with MetricsCsvWriter(str(path)) as writer:
            writer.write(RoundMetrics(round=1, epoch=1, train_loss=1.0, drift_norm=2.0, escape_cm=0.5))
            writer.write(RoundMetrics(round=2, epoch=1, train_loss=0.5, test_acc=0.6, drift_norm=4.0, escape_cm=1.0))
        rows = read_metrics_csv(str(path))
        assert rows[1]["test_acc"] == 0.6 and rows[0]["test_acc"] is None
        summary = summarize_metrics(rows)
        assert summary["final_acc"] == 0.6
        assert summary["mean_drift_norm"] == 3.0
        assert summary["mean_escape_cm"] == 0.75
        assert summary["mean_angle_deg"] is None

    def test_summarize_rounds(self):
        rows = [RoundMetrics(1, 1, 0.5, test_acc=0.4), RoundMetrics(2, 2, None, test_acc=0.1)]
        assert summarize_rounds(rows)["final_acc"] == 0.1

    def test_missing_file(self, temp_dir):
        with pytest.raises(ConfigError):
            read_metrics_csv(str(temp_dir / "absent.csv"))

    def test_wrong_header(self, temp_dir):
        path = temp_dir / "other.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ConfigError):
            read_metrics_csv(str(path))


class TestAggregateSummaries:
    """Test cases for mean and std across seeds"""

    @staticmethod
    def summary(final_acc, drift=None):
        values = dict.fromkeys(SUMMARY_KEYS)
        values.update(final_acc=final_acc, mean_drift_norm=drift)
        return values

    def test_mean_and_sample_std(self):
        result = aggregate_summaries([self.summary(0.9, 1.0), self.summary(0.8, 3.0), self.summary(0.7, None)])
        mean, std = result["final_acc"]
        assert mean == pytest.approx(0.8)
        assert std == pytest.approx(0.1)
        assert result["mean_drift_norm"][0] == 2.0
        assert result["mean_drift_norm"][1] == pytest.approx(np.sqrt(2.0))
        assert result["mean_angle_deg"] == (None, None)

    def test_single_trial_has_zero_std(self):
        assert aggregate_summaries([self.summary(0.5)])["final_acc"] == (0.5, 0.0)

    def test_empty(self):
        with pytest.raises(ConfigError):
            aggregate_summaries([])
