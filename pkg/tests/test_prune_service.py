"""Tests for mask generators, the FORCE schedule and cap-constrained selection"""

import numpy as np
import pytest

from models.layout import LayerLayout
from models.mask import MaskPolicy, SparseMask
from models.network import ModelSpec, init_model
from models.param_vector import ParamVector
from services.data_service import synthetic_blobs
from services.prune_service import PruneService, mask_budget
from utils.errors import InvalidParameterError, MaskBudgetError, UnknownSegmentError

SMALL_MLP = ModelSpec("mlp2", (6,), 3, (4,), seed=7)


def fc_layout(*entries):
    return LayerLayout.from_shapes([(name, "fully-connected", shape) for name, shape in entries])


@pytest.fixture
def layout():
    """Three weight segments of lengths 10, 30 and 7 plus one bias segment"""
    return LayerLayout.from_shapes([
        ("a.weight", "fully-connected", (2, 5)),
        ("a.bias", "bias", (2,)),
        ("b.weight", "conv", (3, 2, 5)),
        ("c.weight", "fully-connected", (7, 1)),
    ])


@pytest.fixture
def colluded():
    data = synthetic_blobs(3, 20, 6, 0.2, seed=5)
    return [data.subset(np.arange(0, 30)), data.subset(np.arange(30, 60))]


class TestRandomMasks:
    """Test cases for global and layer-wise random masks"""

    def test_budget_rounds_half_up(self):
        assert mask_budget(0.25, 10) == 3
        assert mask_budget(0.2, 10) == 2

    def test_global_exact_count(self):
        layout = fc_layout(("w", (2, 5)))
        mask = PruneService.mask_random_global(layout, 0.2, seed=1)
        assert mask.ones == 2

    def test_global_extremes(self, layout):
        assert PruneService.mask_random_global(layout, 0.0, seed=1).ones == 0
        full = PruneService.mask_random_global(layout, 1.0, seed=1)
        np.testing.assert_array_equal(full.bits, layout.weight_index_mask().astype(np.int8))

    def test_global_deterministic(self, layout):
        a = PruneService.mask_random_global(layout, 0.3, seed=4)
        b = PruneService.mask_random_global(layout, 0.3, seed=4)
        np.testing.assert_array_equal(a.bits, b.bits)

    def test_layerwise_counts(self, layout):
        mask = PruneService.mask_random_layerwise(layout, 0.25, seed=2)
        ones = {row.name: row.ones for row in mask.occupancy()}
        assert ones == {"a.weight": 3, "a.bias": 0, "b.weight": 8, "c.weight": 2}

    def test_layerwise_equal_halves(self):
        layout = fc_layout(("x", (4, 2)), ("y", (2, 4)))
        mask = PruneService.mask_random_layerwise(layout, 0.5, seed=0)
        assert [row.ones for row in mask.occupancy()] == [4, 4]

    def test_invalid_delta(self, layout):
        with pytest.raises(InvalidParameterError):
            PruneService.mask_random_layerwise(layout, 1.5, seed=0)


class TestCriticalLayers:
    """Test cases for apply_critical_layers"""

    def test_empty_set_unchanged(self, layout):
        mask = PruneService.mask_random_global(layout, 0.3, seed=3)
        np.testing.assert_array_equal(PruneService.apply_critical_layers(mask, []).bits, mask.bits)

    def test_single_segment(self, layout):
        mask = PruneService.apply_critical_layers(SparseMask.empty(layout), ["b.weight"])
        assert mask.delta == pytest.approx(30 / layout.dim)
        assert mask.per_layer["a.weight"] == 0.0

    def test_all_segments(self, layout):
        mask = PruneService.apply_critical_layers(SparseMask.empty(layout), layout.names)
        assert mask.ones == layout.dim

    def test_unknown_segment(self, layout):
        with pytest.raises(UnknownSegmentError):
            PruneService.apply_critical_layers(SparseMask.empty(layout), ["fc9.weight"])


class TestErk:
    """Test cases for the ERK budget split"""

    def test_single_layer_density_is_delta(self):
        layout = fc_layout(("w", (10, 20)))
        assert PruneService.erk_counts(layout, 0.1) == {"w": 20}

    def test_smaller_layer_denser(self):
        layout = fc_layout(("small", (10, 10)), ("large", (100, 100)))
        mask = PruneService.mask_erk(layout, 0.1, seed=0)
        assert mask.per_layer["small"] > mask.per_layer["large"]
        assert mask.ones == mask_budget(0.1, layout.weight_dim)

    def test_clipping_redistributes(self):
        layout = fc_layout(("tiny", (2, 2)), ("large", (50, 50)))
        counts = PruneService.erk_counts(layout, 0.5)
        assert counts["tiny"] <= 4
        assert sum(counts.values()) == mask_budget(0.5, layout.weight_dim)

    def test_bias_excluded(self, layout):
        mask = PruneService.mask_erk(layout, 0.4, seed=1)
        assert mask.per_layer["a.bias"] == 0.0

    def test_invalid_delta(self, layout):
        with pytest.raises(InvalidParameterError):
            PruneService.erk_counts(layout, 0.0)


class TestSaliencyAndSchedule:
    """Test cases for connection saliency and the exponential schedule"""

    def test_connection_saliency(self):
        theta = ParamVector.of([3.0, -1.0, 0.5])
        saliency = PruneService.connection_saliency(theta, ParamVector.of([1.0, 1.0, 1.0]))
        assert saliency.data.tolist() == [3.0, 1.0, 0.5]

    def test_zero_parameter_zero_saliency(self):
        saliency = PruneService.connection_saliency(ParamVector.of([0.0, 2.0]), ParamVector.of([5.0, 0.0]))
        assert saliency.data.tolist() == [0.0, 0.0]

    def test_schedule_endpoints_and_midpoint(self):
        assert PruneService.sparsity_schedule(1000, 10, 2, 0) == 1000
        assert PruneService.sparsity_schedule(1000, 10, 2, 2) == 10
        assert PruneService.sparsity_schedule(1000, 10, 2, 1) == 100

    @pytest.mark.parametrize("d, kappa, T", [(1000, 10, 7), (50, 1, 10), (37, 37, 3), (5000, 25, 20)])
    def test_schedule_monotone(self, d, kappa, T):
        values = [PruneService.sparsity_schedule(d, kappa, T, t) for t in range(T + 1)]
        assert values[0] == d and values[-1] == kappa
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_schedule_invalid(self):
        with pytest.raises(InvalidParameterError):
            PruneService.sparsity_schedule(10, 11, 3, 1)

    def test_consensus_is_client_mean(self):
        result = PruneService.consensus_saliency([np.array([1.0, 3.0]), np.array([3.0, 5.0])])
        assert result.tolist() == [2.0, 4.0]


class TestSelectTopK:
    """Test cases for cap-constrained top-k selection"""

    def test_single_step_oracle(self):
        layout = fc_layout(("w", (3, 1)))
        saliency = PruneService.connection_saliency(ParamVector.of([3.0, -1.0, 0.5]), ParamVector.of([1.0] * 3))
        assert PruneService.select_top_k(saliency.data, layout, 1).tolist() == [0]

    def test_ties_to_lower_index(self):
        layout = fc_layout(("w", (4, 1)))
        assert PruneService.select_top_k(np.ones(4), layout, 2).tolist() == [0, 1]

    def test_biases_never_selected(self, layout):
        saliency = np.zeros(layout.dim)
        saliency[layout.segment("a.bias").as_slice()] = 100.0
        chosen = PruneService.select_top_k(saliency, layout, 5)
        assert not np.isin(chosen, np.arange(10, 12)).any()

    def test_cap_respected(self, layout):
        rng = np.random.default_rng(0)
        saliency = rng.uniform(size=layout.dim)
        saliency[layout.segment("b.weight").as_slice()] += 10.0
        chosen = PruneService.select_top_k(saliency, layout, 20, caps={"b.weight": 0.2})
        mask = SparseMask.from_indices(chosen, layout)
        assert chosen.size == 20
        assert mask.per_layer["b.weight"] <= 0.2 + 1 / 30

    def test_capped_segment_filled_by_saliency(self, layout):
        saliency = np.arange(layout.dim, dtype=np.float64)
        chosen = PruneService.select_top_k(saliency, layout, 10, caps={"c.weight": 0.45})
        seg = layout.segment("c.weight")
        assert sorted(i for i in chosen if seg.offset <= i < seg.stop) == [seg.stop - 3, seg.stop - 2, seg.stop - 1]

    def test_infeasible_caps(self):
        layout = fc_layout(("x", (2, 2)), ("y", (2, 2)))
        with pytest.raises(MaskBudgetError):
            PruneService.select_top_k(np.ones(8), layout, 6, caps={"x": 0.25, "y": 0.25})


class TestForce:
    """Test cases for SNIP and iterative FORCE pruning"""

    def test_exact_count_and_deterministic(self, colluded):
        model = init_model(SMALL_MLP)
        a = PruneService.force_prune(model, colluded, 9, steps=4, seed=3)
        b = PruneService.force_prune(model, colluded, 9, steps=4, seed=3)
        assert a.ones == 9
        np.testing.assert_array_equal(a.bits, b.bits)

    def test_full_budget_selects_all_weights(self, colluded):
        model = init_model(SMALL_MLP)
        mask = PruneService.force_prune(model, colluded, model.layout.weight_dim, steps=3)
        np.testing.assert_array_equal(mask.bits, model.layout.weight_index_mask().astype(np.int8))

    def test_fc_cap(self, colluded):
        model = init_model(SMALL_MLP)
        mask = PruneService.force_prune(model, colluded, 12, steps=3, caps={"fc2.weight": 0.25})
        assert mask.ones == 12
        assert mask.per_layer["fc2.weight"] <= 0.25

    def test_snip_selects_highest_consensus(self, colluded):
        model = init_model(SMALL_MLP)
        mask = PruneService.mask_snip(model, colluded, 10, seed=2)
        per_client = []
        for client, data in enumerate(colluded):
            batch = PruneService._client_batch(data, 2, client, 1, 32)
            per_client.append(PruneService.snip_saliency(model, batch).data)
        consensus = PruneService.consensus_saliency(per_client)
        weights = model.layout.weight_index_mask()
        selected = consensus[(mask.bits == 1) & weights]
        unselected = consensus[(mask.bits == 0) & weights]
        assert selected.min() >= unselected.max()

    def test_parallel_matches_serial(self, colluded):
        model = init_model(SMALL_MLP)
        serial = PruneService.force_prune(model, colluded, 8, steps=3, threads=1)
        parallel = PruneService.force_prune(model, colluded, 8, steps=3, threads=2)
        np.testing.assert_array_equal(serial.bits, parallel.bits)

    def test_zero_budget(self, colluded):
        model = init_model(SMALL_MLP)
        assert PruneService.force_prune(model, colluded, 0, steps=2).ones == 0


class TestBuildMaskAndReport:
    """Test cases for policy realisation and occupancy reporting"""

    def test_critical_layers_applied(self):
        model = init_model(SMALL_MLP)
        mask = PruneService.build_mask(MaskPolicy(kind="random_layerwise", delta=0.1, critical=True), model)
        assert mask.per_layer["fc2.weight"] == 1.0

    def test_erk_policy(self):
        model = init_model(SMALL_MLP)
        mask = PruneService.build_mask(MaskPolicy(kind="erk", delta=0.25), model)
        assert mask.ones == mask_budget(0.25, model.layout.weight_dim)

    @pytest.mark.parametrize("kind", ["random_global", "random_layerwise", "erk"])
    def test_caps_need_saliency_policy(self, kind):
        with pytest.raises(InvalidParameterError, match="caps"):
            MaskPolicy(kind=kind, caps=(("fc2.weight", 0.25),))
        assert MaskPolicy(kind="snip", caps=(("fc2.weight", 0.25),)).cap_map == {"fc2.weight": 0.25}

    def test_occupancy_accounting(self, layout):
        mask = PruneService.mask_random_global(layout, 0.4, seed=8)
        rows = PruneService.layer_occupancy_report(mask)
        assert [r.name for r in rows] == layout.names
        assert sum(r.fraction * r.length for r in rows) / layout.dim == pytest.approx(mask.delta)

    def test_occupancy_extremes(self, layout):
        assert all(r.fraction == 0.0 for r in SparseMask.empty(layout).occupancy())
        full = SparseMask(np.ones(layout.dim, dtype=np.int8), layout)
        assert all(r.fraction == 1.0 for r in full.occupancy())

    def test_format_has_total_row(self, layout):
        text = PruneService.format_occupancy(SparseMask.empty(layout))
        assert text.splitlines()[-1].startswith("total")
        assert len(text.splitlines()) == len(layout.names) + 2
