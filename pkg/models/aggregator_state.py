"""Client updates and server aggregator state"""

from dataclasses import dataclass, replace
from typing import Optional

from models.param_vector import ParamVector
from utils.errors import InvalidParameterError

AGGREGATOR_KINDS = ("mean", "krum", "multikrum", "bulyan", "cc", "cm", "tm", "rfa", "signsgd", "gas")
# Aggregators usable as a GAS base: everything except cc (stateful) and gas itself
GAS_BASE_KINDS = ("mean", "krum", "multikrum", "bulyan", "cm", "tm", "rfa", "signsgd")
KRUM_RULES = ("classic", "wide")


@dataclass(frozen=True)
class ClientUpdate:
    """Momentum sent by one client in one round"""

    client_id: int
    momentum: ParamVector


@dataclass(frozen=True)
class AggregatorState:
    """
    Aggregator kind, hyperparameters and the CC reference carried between rounds.

    byzantine is the k_m the server assumes; krum_neighborhood / multikrum_select
    default to the classic Krum rule (k - k_m - 2) and k - k_m when None.
    """

    kind: str = "mean"
    byzantine: int = 0
    tau: float = 1.0
    clip_iters: int = 1
    krum_neighborhood: Optional[int] = None
    krum_rule: str = "classic"
    multikrum_select: Optional[int] = None
    rfa_eps: float = 1e-8
    rfa_max_iters: int = 100
    rfa_tol: float = 1e-6
    p: int = 100
    base: str = "bulyan"
    reference: Optional[ParamVector] = None

    def __post_init__(self):
        if self.kind not in AGGREGATOR_KINDS:
            raise InvalidParameterError(f"Unknown aggregator '{self.kind}'")
        if self.byzantine < 0:
            raise InvalidParameterError(f"Byzantine count must be >= 0, got {self.byzantine}")
        if self.tau <= 0:
            raise InvalidParameterError(f"Clipping radius tau must be > 0, got {self.tau}")
        if self.clip_iters < 1:
            raise InvalidParameterError(f"Clipping iterations must be >= 1, got {self.clip_iters}")
        if self.krum_rule not in KRUM_RULES:
            raise InvalidParameterError(f"Unknown Krum rule '{self.krum_rule}'")
        if self.krum_neighborhood is not None and self.krum_neighborhood < 1:
            raise InvalidParameterError(f"Krum neighborhood must be >= 1, got {self.krum_neighborhood}")
        if self.multikrum_select is not None and self.multikrum_select < 1:
            raise InvalidParameterError(f"Multi-Krum selection must be >= 1, got {self.multikrum_select}")
        if self.rfa_eps <= 0 or self.rfa_tol <= 0 or self.rfa_max_iters < 1:
            raise InvalidParameterError("RFA eps and tol must be > 0 and max_iters >= 1")
        if self.p < 1:
            raise InvalidParameterError(f"GAS chunk count must be >= 1, got {self.p}")
        if self.base not in GAS_BASE_KINDS:
            raise InvalidParameterError(f"Aggregator '{self.base}' cannot be used as a GAS base")

    def with_reference(self, reference: Optional[ParamVector]) -> "AggregatorState":
        return replace(self, reference=reference)

    def base_state(self) -> "AggregatorState":
        """State used for each GAS chunk"""
        return replace(self, kind=self.base, reference=None)

    def neighborhood(self, k: int) -> int:
        """
        Krum neighbourhood size for k updates

        The rule-based size is clamped to [1, k - 1]; an explicit size outside that range is rejected.
        """
        if self.krum_neighborhood is not None:
            if self.krum_neighborhood > k - 1:
                raise InvalidParameterError(f"Krum neighborhood must lie in [1, {k - 1}], got {self.krum_neighborhood}")
            return self.krum_neighborhood
        if self.krum_rule == "wide":
            size = k - self.byzantine + 2
        else:
            size = k - self.byzantine - 2
        return min(max(1, size), k - 1)

    def select_count(self, k: int) -> int:
        if self.kind == "krum":
            return 1
        if self.multikrum_select is not None:
            return self.multikrum_select
        return max(1, k - self.byzantine)
