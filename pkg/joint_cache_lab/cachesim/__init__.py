"""
Set-associative cache simulator with pluggable replacement and prefetching.

Usage:
    from joint_cache_lab.cachesim import CacheConfig, LruPolicy, NextLinePrefetcher, simulate

    result = simulate(trace, CacheConfig(num_sets=64, associativity=4), LruPolicy(), NextLinePrefetcher())
    with open("events.csv", "w") as f:
        export_events_csv(result.events, f)
"""

from joint_cache_lab.cachesim.model import (
    MISS_TYPES,
    STRIDE_CLAMP,
    AccessContext,
    CacheConfig,
    CacheEvent,
    CacheLineState,
    MissType,
    SimResult,
)
from joint_cache_lab.cachesim.policies import (
    ConstantPredictor,
    LabelPredictor,
    LinePredictor,
    LruPolicy,
    MruPolicy,
    PriorityLruPolicy,
    ReplacementPolicy,
    lru_choose_victim,
    policy_by_name,
)
from joint_cache_lab.cachesim.prefetchers import (
    NextLinePrefetcher,
    Prefetcher,
    StrideEntry,
    StridePrefetcher,
    prefetcher_by_name,
    stride_prefetcher_observe,
)
from joint_cache_lab.cachesim.simulator import (
    EVENT_CSV_HEADER,
    export_events_csv,
    replay_contents,
    simulate,
    useful_prefetch_ratio,
)

__all__ = [
    "MISS_TYPES",
    "STRIDE_CLAMP",
    "AccessContext",
    "CacheConfig",
    "CacheEvent",
    "CacheLineState",
    "MissType",
    "SimResult",
    "ConstantPredictor",
    "LabelPredictor",
    "LinePredictor",
    "LruPolicy",
    "MruPolicy",
    "PriorityLruPolicy",
    "ReplacementPolicy",
    "lru_choose_victim",
    "policy_by_name",
    "NextLinePrefetcher",
    "Prefetcher",
    "StrideEntry",
    "StridePrefetcher",
    "prefetcher_by_name",
    "stride_prefetcher_observe",
    "EVENT_CSV_HEADER",
    "export_events_csv",
    "replay_contents",
    "simulate",
    "useful_prefetch_ratio",
]
