"""Experiment description, per-round metrics and run manifest"""

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

from models.aggregator_state import AggregatorState
from models.attack_config import AttackConfig
from models.mask import MaskPolicy, SparseMask
from models.network import ModelSpec
from utils.errors import InvalidParameterError

DATA_SOURCES = ("blobs", "mnist")
PARTITIONS = ("iid", "dirichlet")

METRIC_COLUMNS = [
    "round", "epoch", "train_loss", "test_acc", "escape_cm", "escape_tm",
    "byz_selected_frac", "drift_norm", "angle_deg", "temporal_cos",
]

STATUS_COMPLETED = "completed"
STATUS_DIVERGED = "diverged"


@dataclass(frozen=True)
class DataConfig:
    """Dataset source and client partitioning"""

    source: str = "blobs"
    directory: Optional[str] = None
    blobs_per_class: int = 200
    blobs_dim: Optional[int] = None
    blobs_spread: float = 0.3
    blobs_test_per_class: int = 100
    partition: str = "iid"
    alpha: float = 1.0

    def __post_init__(self):
        if self.source not in DATA_SOURCES:
            raise InvalidParameterError(f"Unknown data source '{self.source}'")
        if self.partition not in PARTITIONS:
            raise InvalidParameterError(f"Unknown partition '{self.partition}'")
        if self.alpha <= 0:
            raise InvalidParameterError(f"Dirichlet alpha must be > 0, got {self.alpha}")
        if self.blobs_per_class < 1 or self.blobs_test_per_class < 1 or self.blobs_spread < 0:
            raise InvalidParameterError("Blob counts must be >= 1 and spread >= 0")


@dataclass(frozen=True)
class FLConfig:
    """Federation size, momentum and learning-rate schedule"""

    clients: int = 25
    byzantine: int = 5
    beta: float = 0.9
    epochs: int = 10
    batch_size: int = 32
    lr: float = 0.1
    lr_decay: float = 0.1
    lr_decay_at: float = 0.75

    def __post_init__(self):
        if self.clients < 1:
            raise InvalidParameterError(f"Client count must be >= 1, got {self.clients}")
        if self.byzantine < 0 or 2 * self.byzantine >= self.clients:
            raise InvalidParameterError(
                f"Byzantine count must satisfy 0 <= k_m < k/2, got k_m={self.byzantine}, k={self.clients}"
            )
        if not 0.0 <= self.beta < 1.0:
            raise InvalidParameterError(f"Momentum beta must lie in [0, 1), got {self.beta}")
        if self.lr <= 0:
            raise InvalidParameterError(f"Learning rate must be > 0, got {self.lr}")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidParameterError("Epochs and batch size must be >= 1")
        if self.lr_decay <= 0 or not 0.0 <= self.lr_decay_at <= 1.0:
            raise InvalidParameterError("lr_decay must be > 0 and lr_decay_at in [0, 1]")

    @property
    def benign(self) -> int:
        return self.clients - self.byzantine

    def byzantine_ids(self) -> List[int]:
        return list(range(self.benign, self.clients))

    def decay_epoch(self) -> int:
        return int(self.lr_decay_at * self.epochs)

    def lr_at_epoch(self, epoch: int) -> float:
        """Learning rate for a 0-based epoch index"""
        return self.lr * self.lr_decay if epoch >= self.decay_epoch() else self.lr


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one simulated training run"""

    model: ModelSpec
    data: DataConfig
    fl: FLConfig
    aggregator: AggregatorState
    attack: AttackConfig
    mask: MaskPolicy
    mask_path: Optional[str] = None
    seed: int = 0


@dataclass
class RoundMetrics:
    """Diagnostics recorded after one aggregation round (None = absent)"""

    round: int
    epoch: int
    train_loss: Optional[float]
    test_acc: Optional[float] = None
    escape_cm: Optional[float] = None
    escape_tm: Optional[float] = None
    byz_selected_frac: Optional[float] = None
    drift_norm: Optional[float] = None
    angle_deg: Optional[float] = None
    temporal_cos: Optional[float] = None

    def as_dict(self) -> Dict[str, Optional[float]]:
        return asdict(self)


@dataclass
class SimulationResult:
    metrics: List[RoundMetrics]
    status: str = STATUS_COMPLETED
    mask: Optional[SparseMask] = None
    mask_generated: bool = False

    @property
    def diverged(self) -> bool:
        return self.status == STATUS_DIVERGED

    @property
    def final_accuracy(self) -> Optional[float]:
        for row in reversed(self.metrics):
            if row.test_acc is not None:
                return row.test_acc
        return None


@dataclass
class RunManifest:
    """Provenance sidecar written next to every metrics CSV"""

    config_path: Optional[str]
    config_hash: str
    seed: int
    outputs: Dict[str, str]
    started_at: str
    finished_at: Optional[str] = None
    artifact_version: str = ""
    status: str = STATUS_COMPLETED
    summary: Dict[str, Optional[float]] = field(default_factory=dict)

    def as_dict(self) -> Dict:
        return asdict(self)
