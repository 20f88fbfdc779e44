"""Federated training loop with momentum clients, Byzantine substitution and robust aggregation"""

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import torch
from loguru import logger

from config import Config
from models.aggregator_state import ClientUpdate
from models.dataset import Dataset, Partition
from models.experiment import STATUS_COMPLETED, STATUS_DIVERGED, ExperimentConfig, RoundMetrics, SimulationResult
from models.mask import SparseMask
from models.network import Model, accuracy, apply_update, init_model, loss_and_grad
from models.param_vector import ParamVector
from pipeline.diagnostics import (
    byzantine_selection_fraction,
    escape_ratio_cm,
    escape_ratio_tm,
    reference_drift_metrics,
)
from services.aggregation_service import agg_cm, aggregate
from services.attack_service import attack_bitflip, benign_stats, compute_z_max, craft_byzantine_update
from services.data_service import flip_labels, load_training_data, partition_dataset
from services.prune_service import PruneService
from utils.errors import (
    InfeasibleAggregationError,
    InvalidParameterError,
    NonFiniteError,
    SimulationError,
)
from utils.file_utils import read_mask_file

MetricsSink = Callable[[RoundMetrics], None]
SELECTION_AGGREGATORS = ("krum", "multikrum", "bulyan")


class ClientSampler:
    """Endless seeded stream of mini-batches over one client's indices"""

    def __init__(self, indices: np.ndarray, seed: int, client_id: int):
        self.indices = np.asarray(indices, dtype=np.int64)
        self.rng = np.random.default_rng([seed, client_id])
        self.order = self.rng.permutation(self.indices)
        self.cursor = 0

    def next_batch(self, batch_size: int) -> np.ndarray:
        if self.indices.size <= batch_size:
            return self.rng.permutation(self.indices)
        if self.cursor + batch_size > self.order.size:
            self.order = self.rng.permutation(self.indices)
            self.cursor = 0
        batch = self.order[self.cursor:self.cursor + batch_size]
        self.cursor += batch_size
        return batch


def rounds_per_epoch(partition: Partition, batch_size: int) -> int:
    """ceil(mean client size / batch size)"""
    return max(1, math.ceil(float(partition.sizes().mean()) / batch_size))


def update_momentum(momentum: np.ndarray, grad: np.ndarray, beta: float) -> np.ndarray:
    """m <- (1 - beta) g + beta m"""
    return (1.0 - beta) * grad + beta * momentum


def colluded_datasets(train: Dataset, partition: Partition, byzantine_ids: Sequence[int]) -> List[Dataset]:
    return [train.subset(partition.assignments[c]) for c in byzantine_ids]


def prepare_mask(cfg: ExperimentConfig, model: Model, train: Dataset, partition: Partition, threads: int) -> Optional[SparseMask]:
    """Load the configured mask file or generate the mask from theta_0 and the colluded data"""
    if cfg.attack.kind != "hybrid_sparse" or cfg.fl.byzantine == 0:
        return None
    if cfg.mask_path:
        mask = read_mask_file(cfg.mask_path, model.layout)
        logger.info(f"[SIM] Loaded mask {cfg.mask_path}: {mask.ones} ones, delta {mask.delta:.6f}")
        return mask
    colluded = colluded_datasets(train, partition, cfg.fl.byzantine_ids())
    return PruneService.build_mask(cfg.mask, model, colluded, threads)


def _default_z(cfg: ExperimentConfig) -> float:
    k, k_m = cfg.fl.clients, cfg.fl.byzantine
    if k_m == 0:
        return 0.0
    return max(0.0, compute_z_max(k, k_m))


def run_experiment(
    cfg: ExperimentConfig,
    threads: int = 1,
    sink: Optional[MetricsSink] = None,
    data: Optional[Tuple[Dataset, Dataset]] = None,
    mask: Optional[SparseMask] = None,
) -> SimulationResult:
    """
    Run one federated training experiment

    Args:
        cfg: Experiment configuration
        threads: Client gradient computations run in parallel per round
        sink: Called with every RoundMetrics as soon as it is recorded
        data: Preloaded (train, test) datasets; loaded from cfg.data when None
        mask: Precomputed attack mask; loaded or generated when None

    Returns:
        SimulationResult with per-round metrics and the final status

    Raises:
        SimulationError: the aggregator cannot run (tagged with the round index)
    """
    torch.set_num_threads(Config.TORCH_THREADS)
    fl, spec = cfg.fl, cfg.model
    k, k_m = fl.clients, fl.byzantine
    byzantine_ids = fl.byzantine_ids()
    benign_ids = list(range(fl.benign))
    attack = cfg.attack
    attacking = k_m > 0 and attack.kind != "none"
    mask_supplied = mask is not None

    train, test = data or load_training_data(cfg.data, spec.classes, spec.input_size, cfg.seed)
    partition = partition_dataset(train, cfg.data, k, cfg.seed)
    model = init_model(spec, cfg.seed)
    if attacking and attack.omniscient:
        if attack.z2_above_guidance and attack.kind == "hybrid_sparse":
            logger.warning(f"[SIM] ⚠️ z2 = {attack.z2_max} exceeds the sqrt(2) visibility guidance")
        if mask is None:
            mask = prepare_mask(cfg, model, train, partition, threads)
    z_default = _default_z(cfg) if attacking else 0.0
    mask_generated = mask is not None and not mask_supplied and not cfg.mask_path

    samplers = [ClientSampler(partition.assignments[c], cfg.seed, c) for c in range(k)]
    momenta = [np.zeros(model.dim, dtype=np.float64) for _ in range(k)]
    per_epoch = rounds_per_epoch(partition, fl.batch_size)
    state = cfg.aggregator
    reference = ParamVector.zeros(model.dim, model.layout)
    prev_effective: Optional[ParamVector] = None
    metrics: List[RoundMetrics] = []
    logger.info(
        f"[SIM] Starting: {spec.describe()}, k={k}, k_m={k_m}, agg={state.kind}, attack={attack.kind}, "
        f"{fl.epochs} epochs x {per_epoch} rounds"
    )

    def emit(row: RoundMetrics):
        metrics.append(row)
        if sink is not None:
            sink(row)

    def client_step(client: int, current: Model) -> Optional[float]:
        is_byzantine = attacking and client in byzantine_ids
        if is_byzantine and attack.omniscient:
            return None
        inputs, labels = train.batch(samplers[client].next_batch(fl.batch_size))
        if is_byzantine and attack.kind == "labelflip":
            labels = flip_labels(labels, spec.classes)
        loss, grad = loss_and_grad(current, (inputs, labels))
        if is_byzantine and attack.kind == "bitflip":
            grad = attack_bitflip(grad)
        momenta[client] = update_momentum(momenta[client], grad.data, fl.beta)
        return loss

    status = STATUS_COMPLETED
    round_index = 0
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for epoch in range(fl.epochs):
            lr = fl.lr_at_epoch(epoch)
            if epoch == fl.decay_epoch() and epoch > 0:
                logger.info(f"[SIM] Learning rate decayed to {lr:g} at epoch {epoch + 1}")
            for step in range(per_epoch):
                round_index += 1
                try:
                    losses = list(pool.map(lambda c: client_step(c, model), range(k)))
                    vectors = [ParamVector(m, model.layout) for m in momenta]
                    row = RoundMetrics(
                        round=round_index,
                        epoch=epoch + 1,
                        train_loss=float(np.mean([losses[c] for c in benign_ids])),
                    )

                    byz_vector = None
                    if attacking and attack.omniscient:
                        benign = [vectors[c] for c in benign_ids]
                        stats = benign_stats(benign)
                        outcome = craft_byzantine_update(attack, stats, benign, mask, z_default)
                        byz_vector = outcome.vector
                        for c in byzantine_ids:
                            vectors[c] = byz_vector

                    updates = [ClientUpdate(c, vectors[c]) for c in range(k)]
                    try:
                        result = aggregate(updates, state)
                    except (InfeasibleAggregationError, InvalidParameterError) as e:
                        raise SimulationError(round_index, str(e)) from e

                    if byz_vector is not None:
                        row.escape_cm = escape_ratio_cm(byz_vector, agg_cm(updates))
                        row.escape_tm = escape_ratio_tm(byz_vector, vectors, k_m)
                        drift = reference_drift_metrics(byz_vector, reference, state.tau, prev_effective)
                        row.drift_norm, row.angle_deg, row.temporal_cos = drift.norm, drift.angle_deg, drift.temporal_cos
                        prev_effective = drift.effective
                    if k_m > 0 and state.kind in SELECTION_AGGREGATORS and result.selected_ids is not None:
                        row.byz_selected_frac = byzantine_selection_fraction(result.selected_ids, byzantine_ids)

                    state = result.state
                    reference = result.vector
                    model = apply_update(model, result.vector, lr)
                    if step == per_epoch - 1:
                        row.test_acc = accuracy(model, test)
                        logger.info(
                            f"[SIM] Epoch {epoch + 1}/{fl.epochs}: test acc {row.test_acc:.4f}, "
                            f"train loss {row.train_loss:.4f}"
                        )
                    logger.debug(f"[SIM] Round {round_index}: loss {row.train_loss:.6f}")
                    emit(row)
                except NonFiniteError as e:
                    logger.warning(f"[SIM] ⚠️ Diverged at round {round_index}: {e}")
                    status = STATUS_DIVERGED
                    break
            if status == STATUS_DIVERGED:
                _record_diverged_epochs(emit, epoch, fl.epochs, per_epoch, spec.classes)
                break

    return SimulationResult(metrics, status, mask, mask_generated)


def _record_diverged_epochs(emit: MetricsSink, epoch: int, epochs: int, per_epoch: int, classes: int):
    """Chance-level accuracy rows for the diverging epoch and every later one"""
    for e in range(epoch, epochs):
        emit(RoundMetrics(round=(e + 1) * per_epoch, epoch=e + 1, train_loss=None, test_acc=1.0 / classes))
