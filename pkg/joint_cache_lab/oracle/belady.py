"""
Belady's MIN replay over the demand stream.

Each set evicts the resident line whose next use lies farthest ahead
(lines never used again count as farthest, lowest way wins ties). Every
insertion is labeled cache-friendly iff its line was hit at least once
before eviction or the end of the trace.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence

from joint_cache_lab.cachesim import CacheConfig
from joint_cache_lab.trace import Trace, block_of

logger = logging.getLogger(__name__)


class InsertionLabel(Enum):
    FRIENDLY = "friendly"
    AVERSE = "averse"

    @property
    def as_int(self) -> int:
        return 1 if self is InsertionLabel.FRIENDLY else 0


@dataclass
class LabeledInsertion:
    insertion_id: int
    trace_position: int
    block: int
    pc: int
    set_index: int
    label: InsertionLabel = InsertionLabel.AVERSE
    hits: int = 0


@dataclass(frozen=True)
class EvictionDecision:
    trace_position: int
    set_index: int
    way: int
    victim_block: int
    inserted_block: int


@dataclass
class BeladyResult:
    hits: int
    evictions: List[EvictionDecision] = field(default_factory=list)
    insertions: List[LabeledInsertion] = field(default_factory=list)

    def friendly_fraction(self) -> float:
        if not self.insertions:
            return 0.0
        friendly = sum(1 for i in self.insertions if i.label is InsertionLabel.FRIENDLY)
        return friendly / len(self.insertions)


def next_use_scan(blocks: Sequence[int]) -> List[Optional[int]]:
    """Next position at which each block recurs, or None, in one backward pass."""
    next_use: List[Optional[int]] = [None] * len(blocks)
    last_seen = {}
    for index in range(len(blocks) - 1, -1, -1):
        block = blocks[index]
        next_use[index] = last_seen.get(block)
        last_seen[block] = index
    return next_use


@dataclass
class _Line:
    block: int
    next_use: Optional[int]
    insertion: LabeledInsertion


def _farthest_way(lines: List[_Line]) -> int:
    best_way = 0
    best = float("inf") if lines[0].next_use is None else lines[0].next_use
    for way in range(1, len(lines)):
        distance = float("inf") if lines[way].next_use is None else lines[way].next_use
        if distance > best:
            best_way, best = way, distance
    return best_way


def belady_simulate(trace: Trace, config: CacheConfig) -> BeladyResult:
    """
    Replay a trace under MIN with no prefetcher.

    Args:
        trace: Demand accesses
        config: Cache geometry (prefetch settings are ignored)

    Returns:
        BeladyResult with hit count, ordered eviction decisions and one
        LabeledInsertion per miss
    """
    blocks = [block_of(a.address, config.geometry) for a in trace.accesses]
    next_use = next_use_scan(blocks)
    sets: List[List[_Line]] = [[] for _ in range(config.num_sets)]
    result = BeladyResult(hits=0)

    for position, block in enumerate(blocks):
        set_index = config.set_of(block)
        lines = sets[set_index]
        resident = next((line for line in lines if line.block == block), None)
        if resident is not None:
            resident.next_use = next_use[position]
            resident.insertion.hits += 1
            resident.insertion.label = InsertionLabel.FRIENDLY
            result.hits += 1
            continue

        insertion = LabeledInsertion(
            insertion_id=len(result.insertions),
            trace_position=position,
            block=block,
            pc=trace.accesses[position].pc,
            set_index=set_index,
        )
        result.insertions.append(insertion)
        line = _Line(block, next_use[position], insertion)
        if len(lines) < config.associativity:
            lines.append(line)
            continue
        way = _farthest_way(lines)
        result.evictions.append(
            EvictionDecision(position, set_index, way, lines[way].block, block)
        )
        lines[way] = line

    logger.debug(
        f"MIN replay of {trace.source_name}: hits={result.hits} "
        f"insertions={len(result.insertions)} friendly={result.friendly_fraction():.3f}"
    )
    return result
