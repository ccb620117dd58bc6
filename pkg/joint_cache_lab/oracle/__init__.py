"""
Offline Belady MIN oracle: optimal decisions and friendly/averse labels.

Usage:
    from joint_cache_lab.oracle import belady_simulate, brute_force_optimal

    result = belady_simulate(trace, CacheConfig(num_sets=1, associativity=2))
    assert result.hits == brute_force_optimal(trace, CacheConfig(num_sets=1, associativity=2))
"""

from joint_cache_lab.oracle.belady import (
    BeladyResult,
    EvictionDecision,
    InsertionLabel,
    LabeledInsertion,
    belady_simulate,
    next_use_scan,
)
from joint_cache_lab.oracle.brute_force import (
    MAX_ASSOCIATIVITY,
    MAX_TRACE_LENGTH,
    brute_force_optimal,
)
from joint_cache_lab.oracle.labels import LABEL_CSV_HEADER, read_labels, write_labels

__all__ = [
    "BeladyResult",
    "EvictionDecision",
    "InsertionLabel",
    "LabeledInsertion",
    "belady_simulate",
    "next_use_scan",
    "MAX_ASSOCIATIVITY",
    "MAX_TRACE_LENGTH",
    "brute_force_optimal",
    "LABEL_CSV_HEADER",
    "read_labels",
    "write_labels",
]
