"""
Contrastive pairs between prefetch decisions and later replacement decisions.

A prefetch view at event i and a replacement insertion at event j form a
positive pair when 0 < j - i <= W and the block the prefetch targets lives
in the insertion's set (or, with `same_block`, is the inserted block).
Each positive gets k negatives: the same replacement sample re-paired with
prefetch views drawn uniformly from outside its window.
"""

import csv
import logging
from bisect import bisect_left
from dataclasses import dataclass
from typing import List, Sequence, TextIO

import numpy as np

from joint_cache_lab.cachesim import CacheEvent
from joint_cache_lab.errors import ConfigError, DataIntegrityError
from joint_cache_lab.features.samples import PrefetchSample, ReplacementSample

logger = logging.getLogger(__name__)

PAIRINGS = ("same_set", "same_block")


@dataclass
class PairSample:
    pair_id: int
    replacement: ReplacementSample
    prefetch: PrefetchSample
    is_positive: bool
    group_id: int


def _linked(pf: PrefetchSample, repl: ReplacementSample, pairing: str) -> bool:
    if not pf.has_target:
        return False
    if pairing == "same_block":
        return pf.target_block == repl.block
    return pf.target_set == repl.set_index


def make_pairs(
    repl: Sequence[ReplacementSample],
    pf: Sequence[PrefetchSample],
    events: Sequence[CacheEvent],
    window: int = 32,
    negatives_per_positive: int = 4,
    seed: int = 0,
    pairing: str = "same_set",
) -> List[PairSample]:
    """
    Build positive pairs and sampled negatives.

    Output depends only on the sets of samples and the seed, not on input order.
    Positives whose window already covers every prefetch view get no
    negatives and are dropped.

    Raises:
        DataIntegrityError: A sample references an event outside `events`
    """
    if pairing not in PAIRINGS:
        raise ConfigError(f"pairing must be one of {', '.join(PAIRINGS)}, got {pairing!r}")
    for sample in list(repl) + list(pf):
        if not 0 <= sample.event_index < len(events):
            raise DataIntegrityError(f"sample event {sample.event_index} not in the event log")

    repl_sorted = sorted(repl, key=lambda s: (s.event_index, s.insertion_id))
    pf_sorted = sorted(pf, key=lambda s: s.event_index)
    pf_events = [s.event_index for s in pf_sorted]
    rng = np.random.default_rng(seed)

    pairs: List[PairSample] = []
    dropped = 0
    for r in repl_sorted:
        lo = bisect_left(pf_events, r.event_index - window)
        hi = bisect_left(pf_events, r.event_index)
        outside = len(pf_sorted) - (hi - lo)
        for candidate in pf_sorted[lo:hi]:
            if not _linked(candidate, r, pairing):
                continue
            if outside == 0:
                dropped += 1
                continue
            group = len(pairs)
            pairs.append(PairSample(group, r, candidate, True, group))
            for pick in rng.integers(0, outside, size=negatives_per_positive):
                index = int(pick) if pick < lo else int(pick) + (hi - lo)
                pairs.append(PairSample(len(pairs), r, pf_sorted[index], False, group))

    positives = sum(1 for p in pairs if p.is_positive)
    logger.debug(f"Built {positives} positive and {len(pairs) - positives} negative pairs")
    if dropped:
        logger.warning(f"Dropped {dropped} positives with no prefetch views outside their window")
    return pairs


def write_pairs(pairs: Sequence[PairSample], stream: TextIO) -> None:
    """CSV `pair_id,pos,repl_ref,pf_ref` (insertion id, prefetch event index)."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["pair_id", "pos", "repl_ref", "pf_ref"])
    for p in pairs:
        writer.writerow([p.pair_id, int(p.is_positive), p.replacement.insertion_id, p.prefetch.event_index])
