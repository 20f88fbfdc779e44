"""Sparse mask generation for the hybrid attack"""

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
from loguru import logger

from models.dataset import Dataset
from models.layout import LayerLayout, SegmentKind
from models.mask import LayerOccupancy, MaskPolicy, SparseMask
from models.network import Model, critical_layers, grad_at_masked, loss_and_grad
from models.param_vector import ParamVector
from utils.errors import EmptyInputError, InvalidParameterError, MaskBudgetError


def mask_budget(delta: float, size: int) -> int:
    """Exact ones-count for a fraction delta of size coordinates (round half up)"""
    return int(math.floor(delta * size + 0.5))


def _check_delta(delta: float):
    if not 0.0 <= delta <= 1.0:
        raise InvalidParameterError(f"Mask delta must lie in [0, 1], got {delta}")


class PruneService:
    """Mask generators: random, layer-wise, ERK, critical layers, SNIP and FORCE"""

    @staticmethod
    def mask_random_global(layout: LayerLayout, delta: float, seed: int) -> SparseMask:
        """
        Exactly round(delta * d_w) ones placed uniformly among weight coordinates

        Args:
            layout: Parameter layout (bias segments are never selected)
            delta: Target ones-fraction of the weight coordinates
            seed: Sampling seed

        Returns:
            SparseMask
        """
        _check_delta(delta)
        weights = np.flatnonzero(layout.weight_index_mask())
        count = mask_budget(delta, weights.size)
        rng = np.random.default_rng(seed)
        return SparseMask.from_indices(rng.permutation(weights)[:count], layout)

    @staticmethod
    def mask_random_layerwise(layout: LayerLayout, delta: float, seed: int) -> SparseMask:
        """Each weight segment independently receives exactly round(delta * len) ones"""
        _check_delta(delta)
        rng = np.random.default_rng(seed)
        chosen = []
        for seg in layout.weight_segments():
            count = mask_budget(delta, seg.length)
            chosen.append(seg.offset + rng.permutation(seg.length)[:count])
        return SparseMask.from_indices(np.concatenate(chosen) if chosen else [], layout)

    @staticmethod
    def apply_critical_layers(mask: SparseMask, critical: Sequence[str]) -> SparseMask:
        """Set every coordinate of the named segments to one"""
        bits = mask.bits.copy()
        for name in critical:
            bits[mask.layout.segment(name).as_slice()] = 1
        return SparseMask(bits, mask.layout)

    @staticmethod
    def erk_scores(layout: LayerLayout) -> Dict[str, float]:
        """Unnormalized ERK density of each weight segment"""
        scores = {}
        for seg in layout.weight_segments():
            if seg.kind is SegmentKind.CONV:
                scores[seg.name] = sum(seg.shape) / seg.length
            else:
                fan_out, fan_in = seg.shape[0], math.prod(seg.shape[1:])
                scores[seg.name] = (fan_in + fan_out) / (fan_in * fan_out)
        return scores

    @staticmethod
    def erk_counts(layout: LayerLayout, delta: float) -> Dict[str, int]:
        """
        Per-segment ones-counts: density proportional to the ERK score, clipped to 1

        Segments whose density would exceed 1 are made dense and the rest of the
        budget is re-spread over the others; counts are rounded by largest
        remainder so they sum to round(delta * d_w).
        """
        if not 0.0 < delta < 1.0:
            raise InvalidParameterError(f"ERK needs 0 < delta < 1, got {delta}")
        segments = layout.weight_segments()
        scores = PruneService.erk_scores(layout)
        budget = mask_budget(delta, layout.weight_dim)
        dense = set()
        while True:
            remaining = budget - sum(seg.length for seg in segments if seg.name in dense)
            sparse = [seg for seg in segments if seg.name not in dense]
            if remaining < 0 or (remaining > 0 and not sparse):
                raise MaskBudgetError(f"ERK cannot place exactly {budget} ones after clipping")
            if not sparse:
                break
            factor = remaining / sum(scores[seg.name] * seg.length for seg in sparse)
            overfull = [seg.name for seg in sparse if factor * scores[seg.name] > 1.0]
            if not overfull:
                break
            dense.update(overfull)

        counts = {seg.name: seg.length for seg in segments if seg.name in dense}
        if sparse:
            raw = np.array([factor * scores[seg.name] * seg.length for seg in sparse])
            floors = np.floor(raw).astype(np.int64)
            missing = remaining - int(floors.sum())
            order = np.lexsort((np.arange(raw.size), -(raw - floors)))
            floors[order[:missing]] += 1
            for seg, count in zip(sparse, floors):
                counts[seg.name] = min(int(count), seg.length)
        if sum(counts.values()) != budget:
            raise MaskBudgetError(f"ERK rounding placed {sum(counts.values())} ones instead of {budget}")
        return counts

    @staticmethod
    def mask_erk(layout: LayerLayout, delta: float, seed: int = 0) -> SparseMask:
        """ERK per-segment budgets, coordinates drawn uniformly within each segment"""
        counts = PruneService.erk_counts(layout, delta)
        rng = np.random.default_rng(seed)
        chosen = []
        for seg in layout.weight_segments():
            chosen.append(seg.offset + rng.permutation(seg.length)[:counts[seg.name]])
        return SparseMask.from_indices(np.concatenate(chosen), layout)

    @staticmethod
    def connection_saliency(theta: ParamVector, grad: ParamVector) -> ParamVector:
        """|theta * grad| elementwise"""
        return theta.with_data(np.abs(theta.data * grad.data))

    @staticmethod
    def snip_saliency(model: Model, batch) -> ParamVector:
        _, grad = loss_and_grad(model, batch)
        return PruneService.connection_saliency(model.params, grad)

    @staticmethod
    def sparsity_schedule(d: int, kappa: int, T: int, t: int) -> int:
        """
        Exponentially decaying number of kept coordinates

        kappa_t = floor(exp((t/T) log kappa + (1 - t/T) log d)), with kappa_0 = d
        and kappa_T = kappa exactly.
        """
        if not 1 <= kappa <= d:
            raise InvalidParameterError(f"Schedule needs 1 <= kappa <= d, got kappa={kappa}, d={d}")
        if T < 1 or not 0 <= t <= T:
            raise InvalidParameterError(f"Schedule needs T >= 1 and 0 <= t <= T, got T={T}, t={t}")
        if t == 0:
            return d
        if t == T:
            return kappa
        frac = t / T
        value = math.exp(frac * math.log(kappa) + (1.0 - frac) * math.log(d))
        return min(d, max(kappa, int(math.floor(value + 1e-9))))

    @staticmethod
    def consensus_saliency(per_client: Sequence[np.ndarray]) -> np.ndarray:
        """Average of the colluding clients' saliencies, reduced in client order"""
        if len(per_client) == 0:
            raise EmptyInputError("No client saliencies to combine")
        total = np.zeros_like(np.asarray(per_client[0], dtype=np.float64))
        for s in per_client:
            total += np.asarray(s, dtype=np.float64)
        return total / len(per_client)

    @staticmethod
    def _select_with_limits(saliency: np.ndarray, layout: LayerLayout, kappa: int, limits: Mapping[str, int]) -> np.ndarray:
        weights = np.flatnonzero(layout.weight_index_mask())
        order = weights[np.lexsort((weights, -saliency[weights]))]
        allowed = np.ones(order.size, dtype=bool)
        seg_ids = layout.segment_ids()[order]
        for name, limit in limits.items():
            layout.segment(name)
            seg_index = layout.names.index(name)
            positions = np.flatnonzero(seg_ids == seg_index)
            allowed[positions[limit:]] = False
        candidates = order[allowed]
        if candidates.size < kappa:
            raise MaskBudgetError(
                f"Caps leave only {candidates.size} selectable coordinates for a budget of {kappa}"
            )
        return np.sort(candidates[:kappa])

    @staticmethod
    def select_top_k(saliency: np.ndarray, layout: LayerLayout, kappa: int, caps: Optional[Mapping[str, float]] = None) -> np.ndarray:
        """
        Indices of the kappa most salient weight coordinates under per-segment caps

        Coordinates are walked by decreasing saliency (ties: lower index first);
        a coordinate of a capped segment is skipped once that segment holds
        floor(cap * len) selections.

        Raises:
            MaskBudgetError: if the caps leave fewer than kappa coordinates
        """
        saliency = np.asarray(saliency, dtype=np.float64).reshape(-1)
        limits = {
            name: int(math.floor(cap * layout.segment(name).length))
            for name, cap in (caps or {}).items()
        }
        return PruneService._select_with_limits(saliency, layout, kappa, limits)

    @staticmethod
    def _client_batch(data: Dataset, seed: int, client: int, step: int, batch_size: int):
        rng = np.random.default_rng([seed, client, step])
        size = min(batch_size, len(data))
        return data.batch(rng.choice(len(data), size=size, replace=False))

    @staticmethod
    def force_prune(
        model: Model,
        colluded: Sequence[Dataset],
        kappa: int,
        steps: int,
        caps: Optional[Mapping[str, float]] = None,
        seed: int = 0,
        batch_size: int = 32,
        threads: int = 1,
    ) -> SparseMask:
        """
        Iterative saliency pruning run jointly by the colluding clients

        Args:
            model: Global model at the start of training (theta_0)
            colluded: One dataset per colluding client
            kappa: Final number of ones (<= weight coordinates)
            steps: Schedule length T
            caps: Per-segment maximum density applied strictly at the final step
            seed: Seed of the per-(client, step) mini-batch stream
            batch_size: Mini-batch size per client and step
            threads: Client saliencies evaluated in parallel

        Returns:
            SparseMask with exactly kappa ones
        """
        layout = model.layout
        d_w = layout.weight_dim
        if len(colluded) == 0 or any(len(ds) == 0 for ds in colluded):
            raise EmptyInputError("FORCE needs non-empty colluded datasets")
        if not 0 <= kappa <= d_w:
            raise InvalidParameterError(f"kappa must lie in [0, {d_w}], got {kappa}")
        if steps < 1:
            raise InvalidParameterError(f"FORCE needs at least one step, got {steps}")
        if kappa == 0:
            return SparseMask.empty(layout)

        caps = dict(caps or {})
        bias = ~layout.weight_index_mask()
        bits = np.ones(layout.dim, dtype=np.float64)
        theta = model.params

        def client_saliency(client: int, step: int, eval_mask: np.ndarray) -> np.ndarray:
            batch = PruneService._client_batch(colluded[client], seed, client, step, batch_size)
            grad = grad_at_masked(model, eval_mask, batch)
            return np.abs(theta.data * grad.data)

        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            for step in range(1, steps + 1):
                eval_mask = np.where(bias, 1.0, bits)
                saliencies = list(pool.map(lambda c: client_saliency(c, step, eval_mask), range(len(colluded))))
                consensus = PruneService.consensus_saliency(saliencies)
                kappa_t = PruneService.sparsity_schedule(d_w, kappa, steps, step)
                limits = {}
                for name, cap in caps.items():
                    seg = layout.segment(name)
                    strict = int(math.floor(cap * seg.length))
                    # intermediate steps keep at least the segment's proportional share
                    limits[name] = strict if step == steps else max(strict, math.ceil(seg.length * kappa_t / d_w))
                chosen = PruneService._select_with_limits(consensus, layout, kappa_t, limits)
                bits = np.zeros(layout.dim, dtype=np.float64)
                bits[chosen] = 1.0
                logger.debug(f"[PRUNE] FORCE step {step}/{steps}: kept {kappa_t} coordinates")

        return SparseMask(bits.astype(np.int8), layout)

    @staticmethod
    def mask_snip(
        model: Model,
        colluded: Sequence[Dataset],
        kappa: int,
        caps: Optional[Mapping[str, float]] = None,
        seed: int = 0,
        batch_size: int = 32,
        threads: int = 1,
    ) -> SparseMask:
        """One-shot top-kappa by consensus saliency at the unmasked parameters"""
        return PruneService.force_prune(model, colluded, kappa, 1, caps, seed, batch_size, threads)

    @staticmethod
    def layer_occupancy_report(mask: SparseMask) -> List[LayerOccupancy]:
        return mask.occupancy()

    @staticmethod
    def format_occupancy(mask: SparseMask) -> str:
        """Plain-text occupancy table, one row per segment in layout order"""
        lines = [f"{'segment':<16} {'ones':>10} {'length':>10} {'fraction':>10}"]
        for row in mask.occupancy():
            lines.append(f"{row.name:<16} {row.ones:>10} {row.length:>10} {row.fraction:>10.6f}")
        lines.append(f"{'total':<16} {mask.ones:>10} {mask.dim:>10} {mask.delta:>10.6f}")
        return "\n".join(lines)

    @staticmethod
    def build_mask(policy: MaskPolicy, model: Model, colluded: Sequence[Dataset] = (), threads: int = 1) -> SparseMask:
        """
        Realise a mask policy (random / layer-wise / ERK / SNIP / FORCE, optionally + critical layers)

        Args:
            policy: Mask policy
            model: Initial global model (layout and, for saliency methods, theta_0)
            colluded: Colluding clients' datasets (SNIP / FORCE only)
            threads: Parallel saliency evaluations

        Returns:
            SparseMask
        """
        layout = model.layout
        if policy.kind == "random_global":
            mask = PruneService.mask_random_global(layout, policy.delta, policy.seed)
        elif policy.kind == "random_layerwise":
            mask = PruneService.mask_random_layerwise(layout, policy.delta, policy.seed)
        elif policy.kind == "erk":
            mask = PruneService.mask_erk(layout, policy.delta, policy.seed)
        elif policy.kind == "snip":
            kappa = mask_budget(policy.delta, layout.weight_dim)
            mask = PruneService.mask_snip(
                model, colluded, kappa, policy.cap_map, policy.seed, policy.batch_size, threads
            )
        else:
            kappa = mask_budget(policy.delta, layout.weight_dim)
            mask = PruneService.force_prune(
                model, colluded, kappa, policy.steps, policy.cap_map, policy.seed, policy.batch_size, threads
            )
        if policy.critical:
            mask = PruneService.apply_critical_layers(mask, critical_layers(model.spec))
        logger.info(
            f"[PRUNE] ✅ {policy.kind} mask{' + critical layers' if policy.critical else ''}: "
            f"{mask.ones} ones, delta {mask.delta:.6f}"
        )
        return mask
