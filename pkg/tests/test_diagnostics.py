"""Tests for escape ratios, reference drift and selection rates"""

import numpy as np
import pytest

from models.param_vector import ParamVector
from pipeline.diagnostics import (
    byzantine_selection_fraction,
    escape_ratio_cm,
    escape_ratio_tm,
    reference_drift_metrics,
)
from utils.errors import DimensionError, InfeasibleAggregationError


def vec(*values):
    return ParamVector.of(list(values))


def brute_survives(values, byz, k_m):
    ordered = sorted(values)
    return any(ordered[i] == byz for i in range(k_m, len(values) - k_m))


class TestEscapeRatioCm:
    """Test cases for the median escape ratio"""

    def test_identical(self):
        assert escape_ratio_cm(vec(1.0, 2.0), vec(1.0, 2.0)) == 1.0

    def test_disjoint(self):
        assert escape_ratio_cm(vec(1.0, 2.0), vec(0.0, 0.0)) == 0.0

    def test_median_lands_on_byzantine(self):
        median = float(np.median([1.0, 2.0, 2.0]))
        assert escape_ratio_cm(vec(2.0), vec(median)) == 1.0

    def test_partial(self):
        assert escape_ratio_cm(vec(1.0, 2.0, 3.0, 4.0), vec(1.0, 0.0, 3.0, 0.0)) == 0.5

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            escape_ratio_cm(vec(1.0), vec(1.0, 2.0))


class TestEscapeRatioTm:
    """Test cases for the trimmed-mean escape ratio"""

    def test_coordinate_maximum_trimmed(self):
        updates = [vec(1.0), vec(2.0), vec(9.0)]
        assert escape_ratio_tm(vec(9.0), updates, 1) == 0.0

    def test_median_survives(self):
        updates = [vec(1.0), vec(2.0), vec(3.0)]
        assert escape_ratio_tm(vec(2.0), updates, 1) == 1.0

    @pytest.mark.parametrize("byz", [0.5, 1.0, 1.5, 3.0, 4.5, 5.0, 7.0])
    def test_five_clients_rank_oracle(self, byz):
        values = [1.0, 2.0, byz, 4.0, 5.0]
        updates = [vec(v) for v in values]
        expected = 1.0 if brute_survives(values, byz, 1) else 0.0
        assert escape_ratio_tm(vec(byz), updates, 1) == expected

    def test_duplicated_byzantine_copies(self):
        # two copies at the top: one of them lands inside the kept band
        updates = [vec(1.0), vec(2.0), vec(3.0), vec(8.0), vec(8.0)]
        assert escape_ratio_tm(vec(8.0), updates, 1) == 1.0

    def test_infeasible(self):
        with pytest.raises(InfeasibleAggregationError):
            escape_ratio_tm(vec(1.0), [vec(1.0), vec(2.0)], 1)


class TestReferenceDrift:
    """Test cases for drift norm, angle and temporal cosine"""

    def test_clipped_effective_perturbation(self):
        metrics = reference_drift_metrics(vec(4.0, 1.0), vec(1.0, 1.0), 1.0, None)
        assert metrics.norm == pytest.approx(3.0)
        np.testing.assert_allclose(metrics.effective.data, [1.0, 0.0])
        assert metrics.angle_deg == pytest.approx(45.0)
        assert metrics.temporal_cos is None

    def test_temporal_cosine(self):
        prev = vec(0.0, 2.0)
        metrics = reference_drift_metrics(vec(2.0, 2.0), vec(1.0, 1.0), 10.0, prev)
        assert metrics.temporal_cos == pytest.approx(np.sqrt(0.5))

    def test_angle_in_range(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            metrics = reference_drift_metrics(vec(*rng.normal(size=4)), vec(*rng.normal(size=4)), 0.5, None)
            assert 0.0 <= metrics.angle_deg <= 180.0

    def test_zero_drift(self):
        metrics = reference_drift_metrics(vec(1.0, 2.0), vec(1.0, 2.0), 1.0, None)
        assert metrics.norm == 0.0
        assert metrics.angle_deg is None and metrics.effective is None

    def test_zero_reference_has_no_angle(self):
        metrics = reference_drift_metrics(vec(1.0, 0.0), vec(0.0, 0.0), 1.0, None)
        assert metrics.angle_deg is None
        assert metrics.norm == 1.0


class TestSelectionFraction:
    """Test cases for byzantine_selection_fraction"""

    def test_fraction(self):
        assert byzantine_selection_fraction([0, 3, 4], [3, 4, 5, 6]) == 0.5

    def test_none_selected(self):
        assert byzantine_selection_fraction([0, 1], [5]) == 0.0

    def test_no_byzantines(self):
        assert byzantine_selection_fraction([0, 1], []) is None
