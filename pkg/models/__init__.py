"""Models package: value types shared by the simulator"""

from .layout import LayerLayout, Segment, SegmentKind
from .param_vector import ParamVector
from .network import Model, ModelSpec
from .dataset import Dataset, Partition
from .mask import MaskPolicy, SparseMask
from .aggregator_state import AggregatorState, ClientUpdate
from .attack_config import AttackConfig, BenignStats
from .experiment import ExperimentConfig, RoundMetrics, RunManifest, SimulationResult

__all__ = [
    'LayerLayout', 'Segment', 'SegmentKind', 'ParamVector', 'Model', 'ModelSpec',
    'Dataset', 'Partition', 'MaskPolicy', 'SparseMask', 'AggregatorState', 'ClientUpdate',
    'AttackConfig', 'BenignStats', 'ExperimentConfig', 'RoundMetrics', 'RunManifest',
    'SimulationResult',
]
