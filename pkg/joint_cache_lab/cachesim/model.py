"""
Cache simulator data types.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

from joint_cache_lab.errors import ConfigError
from joint_cache_lab.trace import BlockGeometry, MemoryAccess

STRIDE_CLAMP = 8


class MissType(Enum):
    HIT = "hit"
    DEMAND_MISS = "demand_miss"
    PREFETCH_FILL = "prefetch_fill"
    PREFETCH_HIT = "prefetch_hit"


# Fixed order for one-hot encodings.
MISS_TYPES: Tuple[MissType, ...] = tuple(MissType)


@dataclass(frozen=True)
class CacheConfig:
    """Set-associative cache geometry; set index = block mod num_sets."""

    num_sets: int = 16
    associativity: int = 1
    geometry: BlockGeometry = field(default_factory=BlockGeometry)
    prefetch_degree: int = 1

    def __post_init__(self):
        if self.num_sets < 1 or self.num_sets & (self.num_sets - 1):
            raise ConfigError(f"num_sets must be a power of two, got {self.num_sets}")
        if self.associativity < 1:
            raise ConfigError(f"associativity must be >= 1, got {self.associativity}")
        if self.prefetch_degree < 0:
            raise ConfigError(f"prefetch_degree must be >= 0, got {self.prefetch_degree}")

    @property
    def capacity(self) -> int:
        return self.num_sets * self.associativity

    def set_of(self, block: int) -> int:
        return block % self.num_sets


@dataclass
class CacheLineState:
    block: int = -1
    valid: bool = False
    last_touch: int = -1
    inserted_by_prefetch: bool = False
    insertion_id: Optional[int] = None
    demand_hits: int = 0
    predicted_friendly: Optional[bool] = None


@dataclass(frozen=True)
class CacheEvent:
    """State snapshot logged at one tag lookup or prefetch fill."""

    event_index: int
    cycle: int
    block: int
    pc: int
    core_id: int
    miss_type: MissType
    stride_id: int
    set_index: int
    is_insertion: bool
    insertion_id: Optional[int]
    trace_position: int
    way: Optional[int] = None
    evicted_block: Optional[int] = None

    @property
    def is_demand(self) -> bool:
        return self.miss_type is not MissType.PREFETCH_FILL


@dataclass(frozen=True)
class AccessContext:
    """What a policy or predictor may know about the access being handled."""

    event_index: int
    trace_position: int
    access: MemoryAccess
    block: int
    set_index: int
    stride_id: int
    miss_type: MissType

    @property
    def is_prefetch(self) -> bool:
        return self.miss_type is MissType.PREFETCH_FILL


@dataclass
class SimResult:
    demand_hits: int
    demand_misses: int
    prefetch_issued: int
    prefetch_useful: int
    events: List[CacheEvent]
    resident: Tuple[Tuple[Optional[int], ...], ...] = ()

    @property
    def demand_accesses(self) -> int:
        return self.demand_hits + self.demand_misses

    def hit_rate(self) -> float:
        total = self.demand_accesses
        return self.demand_hits / total if total else 0.0
