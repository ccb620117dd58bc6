"""
Deterministic trace-driven set-associative cache simulator.

Usage:
    from joint_cache_lab.cachesim import CacheConfig, LruPolicy, StridePrefetcher, simulate

    result = simulate(trace, CacheConfig(num_sets=16, associativity=1), LruPolicy(), StridePrefetcher())
    print(result.demand_hits, result.demand_misses, useful_prefetch_ratio(result))
"""

import csv
import logging
from typing import Dict, List, Optional, Sequence, TextIO, Tuple

from joint_cache_lab.cachesim.model import (
    STRIDE_CLAMP,
    AccessContext,
    CacheConfig,
    CacheEvent,
    CacheLineState,
    MissType,
    SimResult,
)
from joint_cache_lab.cachesim.policies import ReplacementPolicy
from joint_cache_lab.cachesim.prefetchers import Prefetcher
from joint_cache_lab.errors import ConfigError, SimulationFault
from joint_cache_lab.trace import Trace

logger = logging.getLogger(__name__)

OBSERVE_MODES = ("all", "misses", "hits")

EVENT_CSV_HEADER = [
    "event", "cycle", "block", "pc", "core", "miss_type", "stride", "set", "is_insertion",
    "insertion_id",
]


class _Cache:
    """Mutable cache state for one simulation run."""

    def __init__(self, config: CacheConfig):
        self.config = config
        self.sets: List[List[CacheLineState]] = [
            [CacheLineState() for _ in range(config.associativity)] for _ in range(config.num_sets)
        ]
        self.where: Dict[int, Tuple[int, int]] = {}

    def lookup(self, block: int) -> Optional[Tuple[int, int]]:
        return self.where.get(block)

    def free_way(self, set_index: int) -> Optional[int]:
        for way, line in enumerate(self.sets[set_index]):
            if not line.valid:
                return way
        return None

    def fill(
        self, set_index: int, way: int, block: int, tick: int, by_prefetch: bool, insertion_id: int
    ) -> Optional[CacheLineState]:
        """Install `block`; returns the evicted line state (if any)."""
        line = self.sets[set_index][way]
        evicted = None
        if line.valid:
            evicted = CacheLineState(**vars(line))
            del self.where[line.block]
        line.block = block
        line.valid = True
        line.last_touch = tick
        line.inserted_by_prefetch = by_prefetch
        line.insertion_id = insertion_id
        line.demand_hits = 0
        line.predicted_friendly = None
        self.where[block] = (set_index, way)
        return evicted

    def snapshot(self) -> Tuple[Tuple[Optional[int], ...], ...]:
        return tuple(
            tuple(line.block if line.valid else None for line in lines) for lines in self.sets
        )


def _clamp_stride(stride: int) -> int:
    return max(-STRIDE_CLAMP, min(STRIDE_CLAMP, stride))


def simulate(
    trace: Trace,
    config: CacheConfig,
    policy: ReplacementPolicy,
    prefetcher: Optional[Prefetcher] = None,
    observe: str = "all",
) -> SimResult:
    """
    Run a trace through the cache, logging one event per lookup and per prefetch fill.

    Args:
        trace: Demand accesses in order
        config: Cache geometry and prefetch degree
        policy: Replacement policy callbacks
        prefetcher: Optional prefetcher; sees demand accesses per `observe`
        observe: Which demand accesses train the prefetcher: all, misses or hits

    Returns:
        SimResult with counters, the event log and final per-way contents

    Raises:
        SimulationFault: The policy returned an invalid way
    """
    if observe not in OBSERVE_MODES:
        raise ConfigError(f"observe must be one of {', '.join(OBSERVE_MODES)}, got {observe!r}")

    cache = _Cache(config)
    policy.reset(config)
    if prefetcher is not None:
        prefetcher.reset(config)

    block_size = config.geometry.block_size_bytes
    events: List[CacheEvent] = []
    last_block_by_pc: Dict[int, int] = {}
    hits = misses = issued = useful = 0
    next_insertion = 0

    def place(set_index: int, ctx: AccessContext) -> int:
        way = cache.free_way(set_index)
        if way is not None:
            return way
        lines = cache.sets[set_index]
        way = policy.choose_victim(set_index, lines, ctx)
        if not isinstance(way, int) or not 0 <= way < len(lines):
            raise SimulationFault(f"policy {policy.name} returned invalid way {way!r}", ctx.event_index)
        return way

    for position, access in enumerate(trace.accesses):
        block = access.address // block_size
        set_index = config.set_of(block)
        previous = last_block_by_pc.get(access.pc)
        stride_id = 0 if previous is None else _clamp_stride(block - previous)
        last_block_by_pc[access.pc] = block

        event_index = len(events)
        found = cache.lookup(block)
        if found is not None:
            way = found[1]
            line = cache.sets[set_index][way]
            miss_type = (
                MissType.PREFETCH_HIT
                if line.inserted_by_prefetch and line.demand_hits == 0
                else MissType.HIT
            )
        else:
            miss_type = MissType.DEMAND_MISS

        ctx = AccessContext(event_index, position, access, block, set_index, stride_id, miss_type)
        policy.on_access(ctx)

        if found is not None:
            hits += 1
            if miss_type is MissType.PREFETCH_HIT:
                useful += 1
            line.demand_hits += 1
            line.last_touch = event_index
            policy.on_hit(set_index, way, line, ctx)
            events.append(
                CacheEvent(
                    event_index, access.cycle, block, access.pc, access.core_id, miss_type,
                    stride_id, set_index, False, None, position, way,
                )
            )
        else:
            misses += 1
            way = place(set_index, ctx)
            evicted = cache.fill(set_index, way, block, event_index, False, next_insertion)
            policy.on_insert(set_index, way, cache.sets[set_index][way], ctx)
            events.append(
                CacheEvent(
                    event_index, access.cycle, block, access.pc, access.core_id, miss_type,
                    stride_id, set_index, True, next_insertion, position, way,
                    evicted.block if evicted else None,
                )
            )
            next_insertion += 1

        if prefetcher is None:
            continue
        hit = found is not None
        if observe == "misses" and hit or observe == "hits" and not hit:
            continue

        seen = set()
        for candidate in prefetcher.observe(access, block, hit):
            if candidate < 0 or candidate in seen or cache.lookup(candidate) is not None:
                continue
            seen.add(candidate)
            issued += 1
            fill_index = len(events)
            fill_set = config.set_of(candidate)
            fill_ctx = AccessContext(
                fill_index, position, access, candidate, fill_set, stride_id,
                MissType.PREFETCH_FILL,
            )
            fill_way = place(fill_set, fill_ctx)
            evicted = cache.fill(fill_set, fill_way, candidate, fill_index, True, next_insertion)
            policy.on_insert(fill_set, fill_way, cache.sets[fill_set][fill_way], fill_ctx)
            events.append(
                CacheEvent(
                    fill_index, access.cycle, candidate, access.pc, access.core_id,
                    MissType.PREFETCH_FILL, stride_id, fill_set, True, next_insertion, position,
                    fill_way, evicted.block if evicted else None,
                )
            )
            next_insertion += 1

    result = SimResult(
        demand_hits=hits,
        demand_misses=misses,
        prefetch_issued=issued,
        prefetch_useful=useful,
        events=events,
        resident=cache.snapshot(),
    )
    logger.debug(
        f"Simulated {trace.source_name} with {policy.name}: hits={hits} misses={misses} "
        f"prefetches={issued} useful={useful}"
    )
    return result


def useful_prefetch_ratio(result: SimResult) -> float:
    """Useful prefetches over issued prefetches; 0.0 when nothing was issued."""
    if result.prefetch_issued == 0:
        return 0.0
    return result.prefetch_useful / result.prefetch_issued


def replay_contents(
    events: Sequence[CacheEvent], config: CacheConfig
) -> Tuple[Tuple[Optional[int], ...], ...]:
    """Rebuild the final per-set, per-way contents from insertion events."""
    contents: List[List[Optional[int]]] = [
        [None] * config.associativity for _ in range(config.num_sets)
    ]
    for event in events:
        if event.is_insertion and event.way is not None:
            contents[event.set_index][event.way] = event.block
    return tuple(tuple(ways) for ways in contents)


def export_events_csv(events: Sequence[CacheEvent], stream: TextIO) -> None:
    """Write the event log as CSV."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(EVENT_CSV_HEADER)
    for e in events:
        writer.writerow([
            e.event_index, e.cycle, e.block, hex(e.pc), e.core_id, e.miss_type.value, e.stride_id,
            e.set_index, int(e.is_insertion), "" if e.insertion_id is None else e.insertion_id,
        ])
