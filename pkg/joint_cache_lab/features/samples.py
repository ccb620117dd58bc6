"""
Replacement and prefetch samples built from the simulator event log.

Histories are left-padded with the pad id and only ever look at demand
events at or before the sample's own event.
"""

import csv
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, TextIO

import numpy as np

from joint_cache_lab.cachesim import MISS_TYPES, CacheEvent, MissType
from joint_cache_lab.errors import ConfigError, DataIntegrityError
from joint_cache_lab.features.vocab import PAD_ID, FeatureVocabs
from joint_cache_lab.oracle import LabeledInsertion
from joint_cache_lab.trace import BlockGeometry, page_and_offset

logger = logging.getLogger(__name__)

# set index, stride id, one-hot miss type, core id
CONTEXT_DIM = 3 + len(MISS_TYPES)

PREFETCH_TARGETS = ("global", "per_pc")


def context_vector(set_index: int, stride_id: int, miss_type: MissType, core_id: int) -> np.ndarray:
    vector = np.zeros(CONTEXT_DIM, dtype=np.float64)
    vector[0] = set_index
    vector[1] = stride_id
    vector[2 + MISS_TYPES.index(miss_type)] = 1.0
    vector[-1] = core_id
    return vector


@dataclass
class ReplacementSample:
    pc_history: np.ndarray
    context: np.ndarray
    label: int
    insertion_id: int
    event_index: int
    trace_position: int
    set_index: int
    block: int


@dataclass
class PrefetchSample:
    pc_history: np.ndarray
    page_history: np.ndarray
    offset_history: np.ndarray
    target_page: int
    target_offset: int
    event_index: int
    trace_position: int
    target_set: int
    target_block: int
    has_target: bool = True


def offset_token(offset: int) -> int:
    """Offsets are tokenized as offset + 1 so that 0 stays the pad id."""
    return offset + 1


class DemandSeries:
    """Tokenized demand-event columns shared by the sample extractors."""

    def __init__(self, events: Sequence[CacheEvent], vocabs: FeatureVocabs, geometry: BlockGeometry):
        self.events = [e for e in events if e.is_demand]
        pages_offsets = [page_and_offset(e.block, geometry) for e in self.events]
        self.pcs = np.array(vocabs.pc.lookup_many(e.pc for e in self.events), dtype=np.int64)
        self.pages = np.array(vocabs.page.lookup_many(p for p, _ in pages_offsets), dtype=np.int64)
        self.offsets = np.array([offset_token(o) for _, o in pages_offsets], dtype=np.int64)
        self.raw_offsets = [o for _, o in pages_offsets]
        self.by_position: Dict[int, int] = {e.trace_position: d for d, e in enumerate(self.events)}

    def __len__(self) -> int:
        return len(self.events)

    def window(self, column: np.ndarray, d: int, length: int) -> np.ndarray:
        start = d - length + 1
        if start >= 0:
            return column[start:d + 1].copy()
        out = np.full(length, PAD_ID, dtype=np.int64)
        out[-(d + 1):] = column[:d + 1]
        return out

    def next_same_pc(self) -> List[Optional[int]]:
        successor: List[Optional[int]] = [None] * len(self.events)
        seen: Dict[int, int] = {}
        for d in range(len(self.events) - 1, -1, -1):
            pc = self.events[d].pc
            successor[d] = seen.get(pc)
            seen[pc] = d
        return successor


def extract_replacement_samples(
    events: Sequence[CacheEvent],
    labels: Sequence[LabeledInsertion],
    vocabs: FeatureVocabs,
    history_length: int,
    geometry: BlockGeometry = BlockGeometry(),
) -> List[ReplacementSample]:
    """
    One sample per labeled insertion, joined to the demand event at the
    same trace position with the same block.

    Raises:
        DataIntegrityError: A label has no matching demand event
    """
    series = DemandSeries(events, vocabs, geometry)
    samples: List[ReplacementSample] = []
    for label in sorted(labels, key=lambda l: l.trace_position):
        d = series.by_position.get(label.trace_position)
        if d is None or series.events[d].block != label.block:
            raise DataIntegrityError(
                f"insertion {label.insertion_id} (position {label.trace_position}, "
                f"block {label.block}) has no matching demand event"
            )
        event = series.events[d]
        samples.append(
            ReplacementSample(
                pc_history=series.window(series.pcs, d, history_length),
                context=context_vector(event.set_index, event.stride_id, event.miss_type, event.core_id),
                label=label.label.as_int,
                insertion_id=label.insertion_id,
                event_index=event.event_index,
                trace_position=event.trace_position,
                set_index=event.set_index,
                block=event.block,
            )
        )
    return samples


def extract_prefetch_samples(
    events: Sequence[CacheEvent],
    vocabs: FeatureVocabs,
    geometry: BlockGeometry,
    history_length: int,
    aligned: bool = False,
    target: str = "global",
) -> List[PrefetchSample]:
    """
    Prefetch samples over the demand stream.

    Args:
        events: Event log
        vocabs: PC and page vocabularies
        geometry: Block geometry for page/offset split
        history_length: H
        aligned: If True, return one padded view per demand event (the last
            one, or any without a successor, carries has_target=False);
            otherwise only events i >= H-1 that have a successor
        target: "global" (next demand access) or "per_pc" (next access by the same PC)

    Returns:
        Samples in event order; empty when the trace is too short
    """
    if target not in PREFETCH_TARGETS:
        raise ConfigError(f"target must be one of {', '.join(PREFETCH_TARGETS)}, got {target!r}")
    series = DemandSeries(events, vocabs, geometry)
    n = len(series)
    if target == "global":
        successor: List[Optional[int]] = [d + 1 if d + 1 < n else None for d in range(n)]
    else:
        successor = series.next_same_pc()

    samples: List[PrefetchSample] = []
    start = 0 if aligned else history_length - 1
    for d in range(start, n):
        nxt = successor[d]
        if nxt is None and not aligned:
            continue
        event = series.events[d]
        if nxt is not None:
            target_event = series.events[nxt]
            target_page = int(series.pages[nxt])
            target_offset = series.raw_offsets[nxt]
            target_set, target_block = target_event.set_index, target_event.block
        else:
            target_page, target_offset, target_set, target_block = PAD_ID, 0, -1, -1
        samples.append(
            PrefetchSample(
                pc_history=series.window(series.pcs, d, history_length),
                page_history=series.window(series.pages, d, history_length),
                offset_history=series.window(series.offsets, d, history_length),
                target_page=target_page,
                target_offset=target_offset,
                event_index=event.event_index,
                trace_position=event.trace_position,
                target_set=target_set,
                target_block=target_block,
                has_target=nxt is not None,
            )
        )
    return samples


# ==============================================================================
# Audit exports
# ==============================================================================


def _tokens(array: np.ndarray) -> str:
    return " ".join(str(int(v)) for v in array)


def write_replacement_samples(samples: Sequence[ReplacementSample], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["insertion_id", "event", "position", "set", "label", "pc_history", "context"])
    for s in samples:
        writer.writerow([
            s.insertion_id, s.event_index, s.trace_position, s.set_index, s.label,
            _tokens(s.pc_history), " ".join(f"{v:g}" for v in s.context),
        ])


def write_prefetch_samples(samples: Sequence[PrefetchSample], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow([
        "event", "position", "pc_history", "page_history", "offset_history", "target_page",
        "target_offset",
    ])
    for s in samples:
        writer.writerow([
            s.event_index, s.trace_position, _tokens(s.pc_history), _tokens(s.page_history),
            _tokens(s.offset_history), s.target_page if s.has_target else "",
            s.target_offset if s.has_target else "",
        ])
